"""Coupled fixed-point equations for the multiuser efficiency.

The large-system limit reduces a randomly spread multiuser channel with a
posterior-mean detector front end to a pair of scalar equations:

    1/eta = 1       + beta * E{ snr * E(snr; eta, xi) }
    1/xi  = sigma^2 + beta * E{ snr * V(snr; eta, xi) }

where E and V are the mean-square error and retrochannel variance of the
decoupled single-user channel and the expectation runs over the SNR profile.
Coexisting solutions are ranked by the free energy (lower wins); for the
true-posterior detector the same ranking is equivalently the smallest joint
spectral efficiency.

Limit noise levels (matched filter, decorrelator) have closed forms and are
handled by dedicated operations; solve_coupled rejects them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .constellation import Constellation, DetectorSpec, SnrProfile, make_standard
from . import scalar_channel as sc
from .scalar_channel import ScalarParams

__all__ = [
    "SystemSpec",
    "Branch",
    "FixedPointSolution",
    "SolverError",
    "residuals",
    "free_energy",
    "solve_coupled",
    "solve_io",
    "solve",
    "matched_filter_eta",
    "decorrelator_eta",
    "lmmse_eta",
    "general_linear_eta",
    "coexistence_threshold",
    "tau_solution_exists",
    "io_joint_capacity_nats",
]

LN2 = math.log(2.0)

_RESIDUAL_TOL = 1e-10
_BRANCH_DEDUP = 1e-6
_FE_TIE_TOL = 1e-9


class SolverError(RuntimeError):
    """No fixed point located, or an unsupported routing was requested."""


@dataclass(frozen=True)
class SystemSpec:
    """Large-system scenario: load, SNR profile, actual prior and detector."""

    beta: float
    snr_profile: SnrProfile
    actual_prior: Constellation
    detector: DetectorSpec
    channel_kind: str = "real"

    def __post_init__(self):
        if not self.beta >= 0.0:
            raise ValueError("beta must be >= 0")
        if self.channel_kind not in ("real", "complex"):
            raise ValueError("channel_kind must be real or complex")
        want_complex = self.channel_kind == "complex"
        if self.actual_prior.is_complex != want_complex:
            raise ValueError("actual prior does not match the channel kind")
        q = self.detector.resolved_prior(self.actual_prior)
        if q.is_complex != want_complex:
            raise ValueError("postulated prior does not match the channel kind")
        if (self.detector.preset == "custom" and self.detector.sigma == 1.0
                and q == self.actual_prior):
            raise ValueError("custom detector coincides with individually-optimal; use the preset")

    @property
    def q_prior(self):
        return self.detector.resolved_prior(self.actual_prior)

    def with_beta(self, beta):
        return replace(self, beta=beta)


@dataclass(frozen=True)
class Branch:
    eta: float
    xi: float
    free_energy: float


@dataclass(frozen=True)
class FixedPointSolution:
    eta: float
    xi: float
    free_energy: float
    branches: tuple  # of Branch, all located solutions
    dominant_index: int
    iterations: int
    residual: float
    notes: tuple = ()


# ---------------------------------------------------------------------------
# Residuals and free energy
# ---------------------------------------------------------------------------

def _ev_terms(eta, xi, spec):
    """beta-weighted expectations E{snr E} and E{snr V} over the profile."""
    p, q = spec.actual_prior, spec.q_prior
    snrs = spec.snr_profile.snrs()
    ws = spec.snr_profile.weights()
    se = 0.0
    sv = 0.0
    for snr, w in zip(snrs, ws):
        params = ScalarParams(snr, eta, xi)
        se += w * snr * sc.mse(params, p, q)
        sv += w * snr * sc.variance(params, p, q)
    return se, sv


def residuals(eta, xi, spec):
    """(r_eta, r_xi) of the coupled equations at the given point."""
    if spec.detector.is_limit:
        raise SolverError("residuals are defined for finite postulated noise only")
    if not (eta > 0 and xi > 0):
        raise ValueError("eta and xi must be positive")
    se, sv = _ev_terms(eta, xi, spec)
    sigma2 = spec.detector.sigma**2
    return 1.0 / eta - 1.0 - spec.beta * se, 1.0 / xi - sigma2 - spec.beta * sv


def free_energy(eta, xi, spec):
    """Free energy of the replica-symmetric point, in nats.

    Evaluated term by term; the complex channel doubles every coefficient of
    the real expression except the load-normalized log(2pi).
    """
    if spec.detector.is_limit:
        raise SolverError("free energy is defined for finite postulated noise only")
    if not (eta > 0 and xi > 0):
        raise ValueError("eta and xi must be positive")
    beta = spec.beta
    sigma2 = spec.detector.sigma**2
    p, q = spec.actual_prior, spec.q_prior
    ce = 0.0
    for snr, w in zip(spec.snr_profile.snrs(), spec.snr_profile.weights()):
        ce += w * sc.cross_entropy(ScalarParams(snr, eta, xi), p, q)
    if spec.channel_kind == "complex":
        return (
            -ce
            + ((xi - 1.0) - math.log(xi)) / beta
            + math.log(xi / math.pi)
            - xi / eta
            + sigma2 * xi * (eta - xi) / (beta * eta)
            + math.log(2.0 * math.pi) / beta
            + xi / (beta * eta)
        )
    return (
        -ce
        + ((xi - 1.0) - math.log(xi)) / (2.0 * beta)
        - 0.5 * math.log(2.0 * math.pi / xi)
        - xi / (2.0 * eta)
        + sigma2 * xi * (eta - xi) / (2.0 * beta * eta)
        + math.log(2.0 * math.pi) / (2.0 * beta)
        + xi / (2.0 * beta * eta)
    )


# ---------------------------------------------------------------------------
# Coupled solver (finite sigma)
# ---------------------------------------------------------------------------

def _picard_step(eta, xi, spec, sigma2):
    se, sv = _ev_terms(eta, xi, spec)
    return 1.0 / (1.0 + spec.beta * se), 1.0 / (sigma2 + spec.beta * sv)


def _newton_polish(eta, xi, spec, max_iter=25):
    """Drive the residuals below tolerance with a finite-difference Newton."""
    best = (eta, xi)
    best_r = max(abs(r) for r in residuals(eta, xi, spec))
    for _ in range(max_iter):
        if best_r <= _RESIDUAL_TOL / 10.0:
            break
        eta, xi = best
        r0 = np.array(residuals(eta, xi, spec))
        he = 1e-7 * max(eta, 1e-8)
        hx = 1e-7 * max(xi, 1e-8)
        je = (np.array(residuals(eta + he, xi, spec)) - r0) / he
        jx = (np.array(residuals(eta, xi + hx, spec)) - r0) / hx
        jac = np.column_stack([je, jx])
        try:
            step = np.linalg.solve(jac, -r0)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        improved = False
        for _ in range(30):
            cand = (eta + scale * step[0], xi + scale * step[1])
            if cand[0] > 0 and cand[1] > 0:
                r = max(abs(v) for v in residuals(cand[0], cand[1], spec))
                if r < best_r:
                    best, best_r = cand, r
                    improved = True
                    break
            scale *= 0.5
        if not improved:
            break
    return best[0], best[1], best_r


def solve_coupled(spec, damping=0.5, max_iterations=800, starts=8, step_tol=1e-9):
    """Solve the coupled equations by damped iteration with multi-start.

    Each start runs a damped Picard iteration of the natural fixed-point map
    and is polished by a Newton step to the stated residual tolerance.
    Distinct limits are collected as branches, deduplicated at 1e-6, and
    ranked by free energy (exact ties resolve toward larger eta).
    """
    det = spec.detector
    if det.is_limit:
        raise SolverError(
            "solve_coupled handles finite sigma only; use the closed-form "
            "operations for the matched filter / decorrelator limits"
        )
    if spec.beta == 0.0:
        # no interference; the load-normalized free energy is undefined
        eta, xi = 1.0, 1.0 / det.sigma**2
        return FixedPointSolution(eta, xi, math.nan,
                                  (Branch(eta, xi, math.nan),), 0, 0, 0.0)
    sigma2 = det.sigma**2
    found = []
    total_iter = 0
    eta_starts = np.geomspace(1e-3, 1.0, starts)
    for eta0 in eta_starts:
        eta = float(eta0)
        xi = min(float(eta0) / sigma2, 1.0 / sigma2)
        converged = False
        for it in range(max_iterations):
            total_iter += 1
            try:
                eta_new, xi_new = _picard_step(eta, xi, spec, sigma2)
            except sc.QuadratureError:
                break
            eta_next = (1.0 - damping) * eta + damping * eta_new
            xi_next = (1.0 - damping) * xi + damping * xi_new
            step = max(abs(eta_next - eta), abs(xi_next - xi))
            eta, xi = eta_next, xi_next
            if step < step_tol:
                converged = True
                break
        if not converged:
            continue
        eta, xi, resid = _newton_polish(eta, xi, spec)
        if resid <= _RESIDUAL_TOL:
            found.append((eta, xi))
    if not found:
        # Fall back to a bisection on the scalar reduction eta -> xi*(eta).
        found = _scalar_reduction_scan(spec, sigma2)
    if not found:
        raise SolverError("no converged fixed point from any start")
    return _assemble_solution(found, spec, total_iter)


def _xi_for_eta(eta, spec, sigma2, tol=1e-13):
    """Inner root of the xi-equation at fixed eta, by bisection."""
    p, q = spec.actual_prior, spec.q_prior

    def h(xi):
        sv = sum(
            w * snr * sc.variance(ScalarParams(snr, eta, xi), p, q)
            for snr, w in zip(spec.snr_profile.snrs(), spec.snr_profile.weights())
        )
        return 1.0 / xi - sigma2 - spec.beta * sv

    hi = 1.0 / sigma2
    lo = hi * 1e-8
    for _ in range(200):
        if h(lo) > 0:
            break
        lo *= 0.1
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * hi:
            break
    return 0.5 * (lo + hi)


def _scalar_reduction_scan(spec, sigma2, grid_points=60):
    """Sign-change scan of the eta-residual along the curve xi = xi*(eta)."""
    p, q = spec.actual_prior, spec.q_prior

    def g(eta):
        xi = _xi_for_eta(eta, spec, sigma2)
        se = sum(
            w * snr * sc.mse(ScalarParams(snr, eta, xi), p, q)
            for snr, w in zip(spec.snr_profile.snrs(), spec.snr_profile.weights())
        )
        return 1.0 / eta - 1.0 - spec.beta * se, xi

    grid = np.geomspace(1e-4, 1.0, grid_points)
    vals = []
    for eta in grid:
        try:
            vals.append(g(eta)[0])
        except sc.QuadratureError:
            vals.append(np.nan)
    roots = []
    for i in range(len(grid) - 1):
        a, b = vals[i], vals[i + 1]
        if np.isnan(a) or np.isnan(b) or a * b > 0:
            continue
        lo, hi = grid[i], grid[i + 1]
        flo = a
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            fm = g(mid)[0]
            if flo * fm <= 0:
                hi = mid
            else:
                lo, flo = mid, fm
        eta = 0.5 * (lo + hi)
        eta, xi, resid = _newton_polish(eta, g(eta)[1], spec)
        if resid <= _RESIDUAL_TOL:
            roots.append((eta, xi))
    return roots


def _assemble_solution(points, spec, iterations, notes=()):
    uniq = []
    for eta, xi in sorted(points):
        if all(abs(eta - e) > _BRANCH_DEDUP or abs(xi - x) > _BRANCH_DEDUP
               for e, x in uniq):
            uniq.append((eta, xi))
    branches = tuple(Branch(e, x, free_energy(e, x, spec)) for e, x in uniq)
    dominant = 0
    for i, b in enumerate(branches):
        cur = branches[dominant]
        if b.free_energy < cur.free_energy - _FE_TIE_TOL:
            dominant = i
        elif abs(b.free_energy - cur.free_energy) <= _FE_TIE_TOL and b.eta > cur.eta:
            dominant = i
    top = branches[dominant]
    resid = max(abs(r) for r in residuals(top.eta, top.xi, spec))
    return FixedPointSolution(
        eta=top.eta, xi=top.xi, free_energy=top.free_energy, branches=branches,
        dominant_index=dominant, iterations=iterations, residual=resid, notes=notes,
    )


# ---------------------------------------------------------------------------
# Individually optimal detection (replica-symmetric eta = xi)
# ---------------------------------------------------------------------------

def _io_expect_mmse(etas, spec):
    """E{snr mmse(eta snr)} for a vector of etas (batched quadrature)."""
    etas = np.asarray(etas, dtype=float)
    out = np.zeros_like(etas)
    for snr, w in zip(spec.snr_profile.snrs(), spec.snr_profile.weights()):
        out += w * snr * sc.mmse_vec(etas * snr, spec.actual_prior)
    return out


def _io_residual_vec(etas, spec):
    return 1.0 / etas - 1.0 - spec.beta * _io_expect_mmse(etas, spec)


def io_expect_info_nats(eta, spec):
    """E{I(eta snr)} over the profile, in nats."""
    gammas = eta * spec.snr_profile.snrs()
    vals = sc.mutual_info_vec(gammas, spec.actual_prior)
    return float(spec.snr_profile.weights() @ vals)


def io_joint_capacity_nats(eta, spec):
    """Joint-decoding spectral efficiency at a candidate efficiency (nats)."""
    gain = (eta - 1.0) - math.log(eta)
    if spec.channel_kind != "complex":
        gain *= 0.5
    return spec.beta * io_expect_info_nats(eta, spec) + gain


def solve_io(spec, grid_points=400):
    """Efficiency of the individually optimal detector.

    Scans the scalar fixed-point residual on a log grid over eta in (1e-4, 1],
    refines every sign change by bisection, and reports all branches with
    xi = eta.  Ambiguity is resolved by the smallest joint capacity, which is
    cross-checked against the free-energy ranking.
    """
    if spec.detector.preset != "individually-optimal":
        raise SolverError("solve_io requires the individually-optimal preset")
    if spec.beta == 0.0:
        return FixedPointSolution(1.0, 1.0, math.nan,
                                  (Branch(1.0, 1.0, math.nan),), 0, 0, 0.0)
    grid = np.geomspace(1e-4, 1.0, grid_points)
    vals = _io_residual_vec(grid, spec)
    roots = []
    iters = 0
    for i in range(len(grid) - 1):
        if not np.isfinite(vals[i]) or not np.isfinite(vals[i + 1]):
            continue
        if vals[i] == 0.0:
            roots.append(grid[i])
            continue
        if vals[i] * vals[i + 1] >= 0:
            continue
        lo, hi = grid[i], grid[i + 1]
        flo = vals[i]
        for _ in range(90):
            iters += 1
            mid = 0.5 * (lo + hi)
            fm = float(_io_residual_vec(np.array([mid]), spec)[0])
            if flo * fm <= 0:
                hi = mid
            else:
                lo, flo = mid, fm
        roots.append(0.5 * (lo + hi))
    if vals[-1] == 0.0:
        roots.append(grid[-1])
    if not roots:
        raise SolverError("no fixed point located on the eta grid")
    uniq = []
    for eta in sorted(roots):
        if all(abs(eta - e) > _BRANCH_DEDUP for e in uniq):
            uniq.append(eta)
    branches = tuple(Branch(e, e, free_energy(e, e, spec)) for e in uniq)
    cjs = [io_joint_capacity_nats(b.eta, spec) for b in branches]
    dominant = int(np.argmin(cjs))
    fe_dominant = min(range(len(branches)), key=lambda i: branches[i].free_energy)
    notes = ()
    if fe_dominant != dominant and (
        abs(branches[fe_dominant].free_energy - branches[dominant].free_energy)
        > _FE_TIE_TOL
    ):
        notes = ("free-energy and joint-capacity rankings disagree",)
    top = branches[dominant]
    resid = abs(float(_io_residual_vec(np.array([top.eta]), spec)[0]))
    return FixedPointSolution(
        eta=top.eta, xi=top.eta, free_energy=top.free_energy, branches=branches,
        dominant_index=dominant, iterations=iters, residual=resid, notes=notes,
    )


# ---------------------------------------------------------------------------
# Closed-form limits for linear detectors
# ---------------------------------------------------------------------------

def matched_filter_eta(spec):
    """eta = 1 / (1 + beta E{snr}); holds for any prior."""
    return 1.0 / (1.0 + spec.beta * spec.snr_profile.mean_snr())


def lmmse_eta(spec, tol=1e-13):
    """Unique positive root of the linear-MMSE fixed-point equation."""
    prof = spec.snr_profile
    if spec.beta == 0.0:
        return 1.0

    def resid(eta):
        return 1.0 / eta - 1.0 - spec.beta * prof.expect(
            prof.snrs() / (1.0 + eta * prof.snrs())
        )

    lo, hi = 1e-12, 1.0
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if resid(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * hi:
            break
    eta = 0.5 * (lo + hi)
    if abs(resid(eta)) > 1e-12 * max(1.0, 1.0 / eta):
        raise SolverError("lmmse bisection failed to meet tolerance")
    return eta


def _linear_xi(spec, sigma2, tol=1e-14):
    """Root of 1/xi = sigma^2 + beta E{snr/(1+xi snr)}; strictly bracketed."""
    prof = spec.snr_profile

    def t(xi):
        return 1.0 - sigma2 * xi - spec.beta * xi * prof.expect(
            prof.snrs() / (1.0 + xi * prof.snrs())
        )

    lo = 0.0
    hi = 1.0 / sigma2 if sigma2 > 0 else 1.0
    if sigma2 == 0.0:
        while t(hi) > 0:
            hi *= 2.0
            if hi > 1e18:
                raise SolverError("xi-equation root escaped to infinity")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(hi, 1.0):
            break
    return 0.5 * (lo + hi)


def general_linear_eta(spec):
    """(eta, xi) of a gaussian-postulated detector at finite sigma."""
    det = spec.detector
    q = spec.q_prior
    if not q.is_gaussian:
        raise SolverError("general_linear_eta requires a gaussian postulated prior")
    if det.is_limit:
        raise SolverError("use matched_filter_eta / decorrelator_eta for the limits")
    sigma2 = det.sigma**2
    prof = spec.snr_profile
    xi = _linear_xi(spec, sigma2)
    snrs = prof.snrs()
    denom = 1.0 + spec.beta * prof.expect(snrs / (1.0 + xi * snrs) ** 2)
    eta = xi + xi * (sigma2 - 1.0) / denom
    return eta, xi


def decorrelator_eta(spec):
    """Decorrelator efficiency: 1 - beta below full load, xi-equation above."""
    beta = spec.beta
    if beta == 1.0:
        raise SolverError("decorrelator efficiency is singular at beta = 1")
    if beta < 1.0:
        return 1.0 - beta
    prof = spec.snr_profile
    xi = _linear_xi(spec, 0.0)
    snrs = prof.snrs()
    denom = 1.0 + beta * prof.expect(snrs / (1.0 + xi * snrs) ** 2)
    return xi - xi / denom


# ---------------------------------------------------------------------------
# Large-SNR coexistence threshold for antipodal-type inputs
# ---------------------------------------------------------------------------

def _tau_objective(taus):
    """tau * mmse(tau) for the antipodal constellation, vectorized."""
    bpsk = make_standard("bpsk")
    taus = np.asarray(taus, dtype=float)
    return taus * sc.mmse_vec(taus, bpsk)


def _tau_objective_max():
    taus = np.linspace(0.05, 12.0, 240)
    vals = _tau_objective(taus)
    i = int(np.argmax(vals))
    lo = taus[max(i - 1, 0)]
    hi = taus[min(i + 1, len(taus) - 1)]
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc = float(_tau_objective([c])[0])
    fd = float(_tau_objective([d])[0])
    for _ in range(80):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = float(_tau_objective([c])[0])
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = float(_tau_objective([d])[0])
        if b - a < 1e-12:
            break
    tau = 0.5 * (a + b)
    return tau, float(_tau_objective([tau])[0])


def coexistence_threshold(prior=None):
    """Smallest load for which the large-SNR limit equation has a solution.

    The limit equation requires tau * mmse(tau) = 1/beta to be solvable, so
    the threshold is the reciprocal of the maximum of that map.  Valid for
    the antipodal real constellation and its quaternary complex counterpart
    (whose per-axis reduction gives the identical equation).
    """
    _require_antipodal_type(prior)
    _, m = _tau_objective_max()
    return 1.0 / m


def tau_solution_exists(beta, prior=None):
    """Whether the large-SNR limit equation admits a solution at this load."""
    _require_antipodal_type(prior)
    _, m = _tau_objective_max()
    return beta * m >= 1.0


def _require_antipodal_type(prior):
    if prior is None:
        return
    if prior.label not in ("bpsk", "qpsk"):
        raise ValueError("the large-SNR threshold applies to bpsk/qpsk equal-power inputs")


# ---------------------------------------------------------------------------
# Preset routing
# ---------------------------------------------------------------------------

def solve(spec):
    """Route a system spec to the right solver and return a full solution."""
    det = spec.detector
    preset = det.preset
    if preset == "individually-optimal":
        return solve_io(spec)
    if preset == "matched-filter":
        eta = matched_filter_eta(spec)
        return FixedPointSolution(eta, 0.0, math.nan, (Branch(eta, 0.0, math.nan),),
                                  0, 0, 0.0, notes=("xi -> 0 in the matched-filter limit",))
    if preset == "decorrelator":
        eta = decorrelator_eta(spec)
        xi = math.inf if spec.beta < 1.0 else _linear_xi(spec, 0.0)
        return FixedPointSolution(eta, xi, math.nan, (Branch(eta, xi, math.nan),),
                                  0, 0, 0.0, notes=("zero postulated noise limit",))
    if preset == "jointly-optimal":
        raise SolverError(
            "the jointly-optimal limit has no closed-form large-system routing; "
            "it is supported by the finite-size simulator only"
        )
    if preset == "lmmse":
        eta = lmmse_eta(spec)
        fe = free_energy(eta, eta, spec)
        resid = max(abs(r) for r in residuals(eta, eta, spec))
        return FixedPointSolution(eta, eta, fe, (Branch(eta, eta, fe),), 0, 0, resid)
    if det.sigma > 0 and not det.is_limit and spec.q_prior.is_gaussian:
        eta, xi = general_linear_eta(spec)
        fe = free_energy(eta, xi, spec)
        resid = max(abs(r) for r in residuals(eta, xi, spec))
        return FixedPointSolution(eta, xi, fe, (Branch(eta, xi, fe),), 0, 0, resid)
    return solve_coupled(spec)
