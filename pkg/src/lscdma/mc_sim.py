"""Finite-size CDMA Monte Carlo: real detectors on random systems.

Generates y = S x + n with i.i.d. spreading chips, runs the actual
detectors (linear filters by solving the normal equations, optimal ones by
exact posterior enumeration), recovers the hidden Gaussian statistic by
inverting the single-user decision function, and measures how closely the
empirical conditional law matches the decoupled-channel prediction.

Reproducibility: every random draw comes from a counter-based generator
keyed by (seed, trial_index, role), so trials can run in any order or in
parallel and still produce bit-identical results.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .constellation import Constellation, DetectorSpec, SIGMA_INFINITE, SIGMA_ZERO
from . import scalar_channel as sc
from .scalar_channel import DecisionRangeError, ScalarParams

__all__ = [
    "McConfig",
    "TrialRecord",
    "TrialBatch",
    "make_config",
    "assign_snrs",
    "generate_system",
    "detect_linear",
    "detect_io",
    "recover_hidden",
    "run_trials",
    "decoupling_report",
    "DecouplingReport",
    "qfunc",
]

_ROLE_IDS = {"chips": 0, "symbols": 1, "noise": 2}

# Exact posterior enumeration is exponential in the user count; these caps
# guard accidental blowups and can be overridden per config.
_DEFAULT_CAP_BINARY = 12
_DEFAULT_CAP_LARGER = 10

# Kernels at or above this many enumerated vectors run in float32: the
# exponent scale makes the relative 1e-7 weight error irrelevant, and the
# big-K trials are memory-bandwidth bound.
_F32_KERNEL_THRESHOLD = 1 << 20


def qfunc(x):
    """Gaussian tail probability Q(x)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _rng(seed, trial_index, role):
    ss = np.random.SeedSequence(entropy=int(seed),
                                spawn_key=(int(trial_index), _ROLE_IDS[role]))
    return np.random.Generator(np.random.Philox(ss))


def assign_snrs(profile, users):
    """Deterministic per-user SNR assignment matching the profile weights.

    Largest-remainder apportionment of users to atoms; users of the same
    atom are contiguous.  Keeps group populations exact (the two-group
    experiments assume equal halves), unlike a random draw.
    """
    snrs = profile.snrs()
    ws = profile.weights()
    ideal = ws * users
    counts = np.floor(ideal).astype(int)
    rem = users - counts.sum()
    order = np.argsort(-(ideal - counts))
    for i in range(rem):
        counts[order[i]] += 1
    out = np.concatenate([np.full(c, s) for s, c in zip(snrs, counts) if c > 0])
    return tuple(float(v) for v in out)


@dataclass(frozen=True)
class McConfig:
    users: int
    spreading: int
    snr_assignment: tuple  # per-user linear SNRs
    prior: Constellation
    detector: DetectorSpec
    chip_law: str = "binary-pm1"
    trials: int = 1
    seed: int = 0
    enumeration_cap: int | None = None

    def __post_init__(self):
        if self.users < 1 or self.spreading < 1 or self.trials < 1:
            raise ValueError("users, spreading and trials must be >= 1")
        if len(self.snr_assignment) != self.users:
            raise ValueError("snr_assignment must hold one SNR per user")
        if any(s <= 0 for s in self.snr_assignment):
            raise ValueError("SNRs must be positive")
        if self.chip_law not in ("binary-pm1", "gaussian"):
            raise ValueError("chip_law must be binary-pm1 or gaussian")
        if self._needs_enumeration() and self.users > self.cap:
            raise ValueError(
                f"{self.users} users exceed the exact-enumeration cap {self.cap}; "
                "raise enumeration_cap explicitly if the runtime is acceptable"
            )

    def _needs_enumeration(self):
        q = self.detector.resolved_prior(self.prior)
        return not q.is_gaussian and self.detector.sigma != SIGMA_INFINITE

    @property
    def cap(self):
        if self.enumeration_cap is not None:
            return self.enumeration_cap
        q = self.detector.resolved_prior(self.prior)
        n = len(q.points) if not q.is_gaussian else 0
        return _DEFAULT_CAP_BINARY if n <= 2 else _DEFAULT_CAP_LARGER

    @property
    def is_complex(self):
        return self.prior.is_complex


def make_config(users, spreading, profile, prior, detector, **kw):
    """Config with the SNR assignment derived from a profile."""
    return McConfig(users=users, spreading=spreading,
                    snr_assignment=assign_snrs(profile, users),
                    prior=prior, detector=detector, **kw)


@dataclass(frozen=True)
class TrialRecord:
    """Per-user outcome of one trial; hidden_z is None when saturated."""

    x0: complex | float
    pme_out: complex | float
    hidden_z: complex | float | None
    hard_error: bool


# ---------------------------------------------------------------------------
# System generation
# ---------------------------------------------------------------------------

def _draw_chips(rng, shape, chip_law, is_complex):
    if chip_law == "binary-pm1":
        if is_complex:
            re = rng.integers(0, 2, size=shape) * 2 - 1
            im = rng.integers(0, 2, size=shape) * 2 - 1
            return (re + 1j * im) / math.sqrt(2.0)
        return (rng.integers(0, 2, size=shape) * 2 - 1).astype(float)
    if is_complex:
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    return rng.standard_normal(shape)


def _draw_symbols(rng, prior, count):
    if prior.is_gaussian:
        if prior.is_complex:
            return (rng.standard_normal(count) + 1j * rng.standard_normal(count)) / math.sqrt(2.0)
        return rng.standard_normal(count)
    pts = prior.points_array()
    idx = rng.choice(len(pts), size=count, p=prior.probs_array())
    if prior.is_complex:
        return pts[idx, 0] + 1j * pts[idx, 1]
    return pts[idx]


def generate_system(config, trial_index):
    """(S, symbols, noise) for one trial, deterministic in (seed, trial_index).

    Chips are zero-mean unit-power scaled by 1/sqrt(L); column k carries
    amplitude sqrt(snr_k).  Noise is standard Gaussian (real) or circularly
    symmetric unit-power (complex).
    """
    k, ell = config.users, config.spreading
    cplx = config.is_complex
    chips = _draw_chips(_rng(config.seed, trial_index, "chips"), (ell, k),
                        config.chip_law, cplx)
    amps = np.sqrt(np.asarray(config.snr_assignment))
    s_mat = chips / math.sqrt(ell) * amps[None, :]
    x = _draw_symbols(_rng(config.seed, trial_index, "symbols"), config.prior, k)
    nrng = _rng(config.seed, trial_index, "noise")
    if cplx:
        noise = (nrng.standard_normal(ell) + 1j * nrng.standard_normal(ell)) / math.sqrt(2.0)
    else:
        noise = nrng.standard_normal(ell)
    return s_mat, x, noise


# ---------------------------------------------------------------------------
# Detectors
# ---------------------------------------------------------------------------

def detect_linear(s_mat, y, sigma):
    """Linear posterior-mean detection.

    Finite sigma solves [S'S + sigma^2 I] x = S'y.  The infinite-noise limit
    returns the matched-filter correlations S'y (the scaled limit of the
    vanishing PME output); the zero-noise limit applies the pseudoinverse
    with singular values below 1e-10 of the largest truncated.
    """
    herm = s_mat.conj().T if np.iscomplexobj(s_mat) else s_mat.T
    if sigma == SIGMA_INFINITE:
        return herm @ y
    if sigma == SIGMA_ZERO:
        return np.linalg.pinv(s_mat, rcond=1e-10) @ y
    gram = herm @ s_mat
    k = gram.shape[0]
    return np.linalg.solve(gram + sigma**2 * np.eye(k), herm @ y)


@lru_cache(maxsize=32)
def _enum_indices(n_points, k):
    """All n_points**k index vectors, shape (n_points**k, k), smallest k last."""
    total = n_points**k
    idx = np.arange(total)
    out = np.empty((total, k), dtype=np.int64)
    for pos in range(k - 1, -1, -1):
        out[:, pos] = idx % n_points
        idx //= n_points
    return out


def _enum_values(prior, k, cplx):
    pts = prior.points_array()
    vals = (pts[:, 0] + 1j * pts[:, 1]) if cplx else pts
    idx = _enum_indices(len(vals), k)
    logp = np.log(prior.probs_array())
    return vals[idx], logp[idx].sum(axis=1)


def _quad_forms(xmat, gram):
    if np.iscomplexobj(xmat) or np.iscomplexobj(gram):
        return np.real((xmat.conj() @ gram) * xmat).sum(axis=1)
    return ((xmat @ gram) * xmat).sum(axis=1)


def detect_io(s_mat, y, prior, sigma, cap=None):
    """Exact posterior-mean (or zero-noise hard) detection by enumeration.

    Posterior weights are proportional to p(x) exp(-||y - Sx||^2 / (2 s^2 v))
    with v the per-real-component noise variance of the channel convention;
    sigma = 0 returns the vector minimizing ||y - Sx||.  The enumeration is
    split into two halves so the kernel is a rank-limited matrix product.
    """
    if prior.is_gaussian:
        raise ValueError("detect_io needs a discrete prior; use detect_linear")
    k = s_mat.shape[1]
    n_points = len(prior.points)
    if cap is not None and k > cap:
        raise ValueError(f"{k} users exceed the enumeration cap {cap}")
    cplx = np.iscomplexobj(s_mat) or prior.is_complex
    herm = s_mat.conj().T if cplx else s_mat.T
    gram = herm @ s_mat
    proj = herm @ y
    # Exponent scale: real channel noise var 1 per dim; complex channel unit
    # power per entry (1/2 per real component).
    inv_scale = 1.0 / sigma**2 if sigma > 0 else None
    coeff = inv_scale if cplx else (0.5 * inv_scale if inv_scale else None)

    ku = k // 2
    kv = k - ku
    um, ulogp = _enum_values(prior, ku, cplx) if ku else (None, None)
    vm, vlogp = _enum_values(prior, kv, cplx)
    if ku == 0:
        return _io_single_block(vm, vlogp, gram, proj, coeff, sigma)

    g_uu = gram[:ku, :ku]
    g_vv = gram[ku:, ku:]
    g_uv = gram[:ku, ku:]
    qu = _quad_forms(um, g_uu)
    qv = _quad_forms(vm, g_vv)
    lin_u = np.real(um.conj() @ proj[:ku]) if cplx else um @ proj[:ku]
    lin_v = np.real(vm.conj() @ proj[ku:]) if cplx else vm @ proj[ku:]

    if sigma == SIGMA_ZERO:
        # energy_ij = qu_i + qv_j - 2 lin - ... minimized jointly
        cross = _cross_term(um, vm, g_uv, cplx, np.float64)
        energy = (qu - 2.0 * lin_u)[:, None] + (qv - 2.0 * lin_v)[None, :] + 2.0 * cross
        i, j = np.unravel_index(np.argmin(energy), energy.shape)
        return np.concatenate([um[i], vm[j]])

    big = um.shape[0] * vm.shape[0] >= _F32_KERNEL_THRESHOLD
    dtype = np.float32 if big else np.float64
    cross = _cross_term(um, vm, g_uv, cplx, dtype)
    a = (coeff * (2.0 * lin_u - qu) + ulogp).astype(dtype)
    b = (coeff * (2.0 * lin_v - qv) + vlogp).astype(dtype)
    kern = cross
    kern *= -2.0 * coeff
    kern += a[:, None]
    kern += b[None, :]
    kern -= kern.max()
    w = np.exp(kern, out=kern)
    rows = w.sum(axis=1)
    cols = w.sum(axis=0)
    total = rows.sum()
    est_u = (rows @ um) / total
    est_v = (cols @ vm) / total
    return np.concatenate([est_u, est_v])


def _cross_term(um, vm, g_uv, cplx, dtype):
    """Re(u^H G_uv v) for all pairs, in the requested float dtype."""
    if cplx:
        left = um.conj() @ g_uv  # row i holds sum_a conj(u_ia) G_ab
        if dtype == np.float32:
            # Re(left . v) = Re(left).Re(v) - Im(left).Im(v)
            return (left.real.astype(np.float32) @ vm.real.T.astype(np.float32)
                    - left.imag.astype(np.float32) @ vm.imag.T.astype(np.float32))
        return np.real(left @ vm.T).astype(dtype)
    left = (um @ g_uv).astype(dtype)
    return left @ vm.T.astype(dtype)


def _io_single_block(vm, vlogp, gram, proj, coeff, sigma):
    cplx = np.iscomplexobj(vm)
    q = _quad_forms(vm, gram)
    lin = np.real(vm.conj() @ proj) if cplx else vm @ proj
    if sigma == SIGMA_ZERO:
        return vm[int(np.argmin(q - 2.0 * lin))]
    logw = coeff * (2.0 * lin - q) + vlogp
    logw -= logw.max()
    w = np.exp(logw)
    return (w @ vm) / w.sum()


# ---------------------------------------------------------------------------
# Hidden-statistic recovery
# ---------------------------------------------------------------------------

def recover_hidden(estimates, snrs, prior, detector, eta, xi=None):
    """Invert the decision map and rescale so the conditional mean is the
    transmitted symbol: z_tilde = decision^{-1}(estimate) / sqrt(snr).

    Returns (z_tilde, saturated_count); saturated entries (estimates at or
    outside the open decision range, as hard decisions always are) hold NaN.
    The matched-filter and pseudoinverse limits are affine recoveries of
    their own outputs.
    """
    estimates = np.asarray(estimates)
    snrs = np.asarray(snrs, dtype=float)
    if detector.sigma == SIGMA_INFINITE:
        return estimates / snrs, 0
    if detector.sigma == SIGMA_ZERO:
        q = detector.resolved_prior(prior)
        if q.is_gaussian:
            return estimates.copy(), 0  # decorrelator output is symbol-scale
        return np.full(estimates.shape, np.nan, dtype=estimates.dtype), estimates.size
    q = detector.resolved_prior(prior)
    if xi is None:
        raise ValueError("finite-noise recovery needs xi from the solver")
    if prior.is_complex:
        return _recover_complex(estimates, snrs, q, eta, xi)
    return _recover_real(estimates.astype(float), snrs, q, eta, xi)


def _recover_real(estimates, snrs, q, eta, xi):
    est = np.asarray(estimates, dtype=float)
    snr_full = np.broadcast_to(snrs, est.shape)
    z = np.full(est.shape, np.nan)
    saturated = 0
    if q.is_gaussian:
        for snr in np.unique(snr_full):
            m = snr_full == snr
            params = ScalarParams(float(snr), eta, xi)
            z[m] = sc.decision_inverse(est[m], params, q) / math.sqrt(snr)
        return z, 0
    lo = min(q.points)
    hi = max(q.points)
    for snr in np.unique(snr_full):
        m = snr_full == snr
        vals = est[m]
        ok = (vals > lo) & (vals < hi)
        saturated += int((~ok).sum())
        buf = np.full(vals.shape, np.nan)
        if ok.any():
            params = ScalarParams(float(snr), eta, xi)
            buf[ok] = sc.decision_inverse(vals[ok], params, q) / math.sqrt(snr)
        z[m] = buf
    return z, saturated


def _recover_complex(estimates, snrs, q, eta, xi):
    z = np.full(estimates.shape, np.nan, dtype=complex)
    saturated = 0
    flat = estimates.ravel()
    snr_flat = np.broadcast_to(snrs, estimates.shape).ravel()
    out = z.ravel()
    for i, (v, snr) in enumerate(zip(flat, snr_flat)):
        params = ScalarParams(float(snr), eta, xi)
        try:
            zi = sc.decision_inverse(np.array([v.real, v.imag]), params, q)
        except DecisionRangeError:
            saturated += 1
            continue
        out[i] = (zi[0] + 1j * zi[1]) / math.sqrt(snr)
    return out.reshape(estimates.shape), saturated


# ---------------------------------------------------------------------------
# Trial batches and the decoupling report
# ---------------------------------------------------------------------------

@dataclass
class TrialBatch:
    config: McConfig
    x0: np.ndarray  # (trials, users)
    estimates: np.ndarray  # (trials, users)
    z_tilde: np.ndarray | None = None  # filled by recover stage
    saturated: int = 0

    def records(self, trial):
        prior = self.config.prior
        if prior.is_gaussian:
            errs = np.zeros(self.config.users, dtype=bool)
        else:
            hard = hard_decisions(prior, self.z_tilde[trial], self.estimates[trial])
            errs = hard != _sym_index(prior, self.x0[trial])
        out = []
        for k in range(self.config.users):
            hz = None
            if self.z_tilde is not None:
                v = self.z_tilde[trial, k]
                if not np.isnan(np.real(v)):
                    hz = complex(v) if prior.is_complex else float(np.real(v))
            out.append(TrialRecord(self.x0[trial, k], self.estimates[trial, k],
                                   hz, bool(errs[k])))
        return out


def _run_one(config, t):
    s_mat, x, noise = generate_system(config, t)
    y = s_mat @ x + noise
    det = config.detector
    q = det.resolved_prior(config.prior)
    if q.is_gaussian or det.sigma == SIGMA_INFINITE:
        est = detect_linear(s_mat, y, det.sigma)
    else:
        est = detect_io(s_mat, y, q, det.sigma, cap=config.cap)
    return x, est


def run_trials(config, threads=1):
    """Run all trials; results are independent of execution order."""
    cplx = config.is_complex
    dtype = complex if cplx else float
    x0 = np.empty((config.trials, config.users), dtype=dtype)
    est = np.empty_like(x0)

    def work(t):
        x, e = _run_one(config, t)
        x0[t] = x
        est[t] = e

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(config.trials)))
    else:
        for t in range(config.trials):
            work(t)
    return TrialBatch(config=config, x0=x0, estimates=est)


def _sym_index(prior, values):
    pts = prior.points_array()
    if prior.is_complex:
        cand = pts[:, 0] + 1j * pts[:, 1]
        return np.argmin(np.abs(np.asarray(values)[..., None] - cand), axis=-1)
    return np.argmin(np.abs(np.asarray(values)[..., None] - pts), axis=-1)


def hard_decisions(prior, z_tilde, estimates):
    """Nearest-symbol decision on the recovered statistic, falling back to
    the raw estimate where the statistic is unavailable."""
    z = np.asarray(z_tilde, dtype=complex if prior.is_complex else float)
    vals = np.where(np.isnan(np.real(z)), np.asarray(estimates), z)
    return _sym_index(prior, vals)


def ks_distance(samples, mean, std):
    """One-sample Kolmogorov-Smirnov distance against N(mean, std^2).

    The reference Gaussian is fully specified by the theory; nothing is
    fitted to the data.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        return math.nan
    from scipy.special import ndtr

    cdf = ndtr((x - mean) / std)
    up = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(np.abs(cdf - up)), np.max(np.abs(cdf - lo))))


def _excess_kurtosis(x):
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    m2 = np.mean(x**2)
    if m2 == 0:
        return 0.0
    return float(np.mean(x**4) / m2**2 - 3.0)


@dataclass
class AtomSymbolStats:
    snr: float
    symbol: complex | float
    count: int
    mean: float | complex
    var: float
    predicted_var: float
    ks: float
    hist_edges: np.ndarray
    hist_density: np.ndarray


@dataclass
class DecouplingReport:
    eta: float
    xi: float
    per_symbol: list  # of AtomSymbolStats
    ber: dict  # snr -> empirical BER
    predicted_ber: dict  # snr -> Q(sqrt(eta snr)) for antipodal inputs
    saturated: int
    residual_excess_kurtosis: dict  # snr -> kurtosis of z_tilde - x0

    def ks_overall(self):
        """Sample-weighted KS across conditioning cells."""
        tot = sum(s.count for s in self.per_symbol)
        return sum(s.ks * s.count for s in self.per_symbol) / tot if tot else math.nan


def _fd_bins(samples):
    """Freedman-Diaconis bin edges (presentation only)."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < 4:
        return np.linspace(x.min() - 0.5, x.max() + 0.5, 3)
    iqr = x[int(0.75 * n)] - x[int(0.25 * n)]
    width = 2.0 * iqr / n ** (1.0 / 3.0)
    if width <= 0:
        width = (x[-1] - x[0]) / 32 or 1.0
    nbins = max(int(math.ceil((x[-1] - x[0]) / width)), 4)
    return np.linspace(x[0], x[-1], min(nbins, 400) + 1)


def decoupling_report(config, solution, batch=None, threads=1):
    """Measure the decoupled-channel prediction on a finite system.

    Per SNR atom and transmitted symbol: conditional mean and variance of
    the recovered statistic, KS distance against the predicted Gaussian
    (mean = symbol, variance = 1/(eta snr)), plus hard-decision error rates
    and the antipodal prediction Q(sqrt(eta snr)).
    """
    if batch is None:
        batch = run_trials(config, threads=threads)
    eta = solution.eta if hasattr(solution, "eta") else float(solution)
    xi = getattr(solution, "xi", eta)
    snrs = np.asarray(config.snr_assignment)
    z, saturated = recover_hidden(batch.estimates, snrs, config.prior,
                                  config.detector, eta, xi)
    batch.z_tilde = z
    batch.saturated = saturated
    prior = config.prior
    pts = prior.points_array()
    sym_vals = (pts[:, 0] + 1j * pts[:, 1]) if prior.is_complex else pts
    x0_idx = _sym_index(prior, batch.x0)
    hard = hard_decisions(prior, z, batch.estimates)
    errors = hard != x0_idx

    per_symbol = []
    ber = {}
    pber = {}
    kurt = {}
    is_bpsk = (not prior.is_complex) and len(pts) == 2
    for snr in np.unique(snrs):
        col = snrs == snr
        ber[float(snr)] = float(errors[:, col].mean())
        if is_bpsk:
            pber[float(snr)] = qfunc(math.sqrt(eta * snr))
        zc = z[:, col]
        x0c = batch.x0[:, col]
        resid = zc - x0c
        resid = resid[~np.isnan(np.real(resid))]
        if resid.size:
            vals = np.concatenate([np.real(resid), np.imag(resid)]) if prior.is_complex else np.real(resid)
            kurt[float(snr)] = _excess_kurtosis(vals)
        idxc = x0_idx[:, col]
        for s_i, s_val in enumerate(sym_vals):
            sel = idxc == s_i
            samples = zc[sel]
            samples = samples[~np.isnan(np.real(samples))]
            if samples.size == 0:
                continue
            pred_var = 1.0 / (eta * snr)
            if prior.is_complex:
                # report the in-phase component, conditioned on the symbol
                data = np.real(samples)
                mean_ref = float(np.real(s_val))
                pred = pred_var / 2.0
            else:
                data = np.real(samples)
                mean_ref = float(np.real(s_val))
                pred = pred_var
            edges = _fd_bins(data)
            dens, _ = np.histogram(data, bins=edges, density=True)
            per_symbol.append(AtomSymbolStats(
                snr=float(snr), symbol=s_val, count=int(data.size),
                mean=float(data.mean()), var=float(data.var(ddof=1)),
                predicted_var=pred,
                ks=ks_distance(data, mean_ref, math.sqrt(pred)),
                hist_edges=edges, hist_density=dens,
            ))
    return DecouplingReport(eta=eta, xi=xi, per_symbol=per_symbol, ber=ber,
                            predicted_ber=pber, saturated=saturated,
                            residual_excess_kurtosis=kurt)
