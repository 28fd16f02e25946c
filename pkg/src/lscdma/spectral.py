"""Spectral efficiency under separate, joint and successive decoding.

All capacities are computed in nats internally and converted to bits per
dimension at the interface.  The joint-decoding value decomposes as the sum
of single-user informations plus a gain term that is the divergence between
the degraded and undegraded noise laws; an independent route to the same
number integrates the separate-decoding efficiency over the load, and the
two are cross-checked by the acceptance suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .constellation import DetectorSpec
from . import replica_solver as rsolve
from . import scalar_channel as sc

__all__ = [
    "SpectralResult",
    "c_sep",
    "c_joint",
    "joint_via_integral",
    "joint_via_integral_multi",
    "successive_decoding_se",
    "joint_gain_bits",
]

LN2 = math.log(2.0)


@dataclass(frozen=True)
class SpectralResult:
    c_sep: float  # bits per dimension
    c_joint: float  # bits per dimension
    joint_gain: float  # bits per dimension
    per_atom_info: tuple  # of (snr_linear, info_bits)


@lru_cache(maxsize=65536)
def _info_nats_cached(prior, gamma_key):
    return sc.mutual_info(gamma_key * 1e-12, prior)


def _info_nats(prior, gamma):
    # Sweeps revisit identical effective SNRs; key on gamma rounded to 1e-12.
    return _info_nats_cached(prior, round(gamma * 1e12))


def _expect_info_nats(spec, eta):
    prof = spec.snr_profile
    return sum(
        w * _info_nats(spec.actual_prior, eta * snr)
        for snr, w in zip(prof.snrs(), prof.weights())
    )


def joint_gain_nats(eta, channel_kind):
    """Divergence between N(0, eta) and N(0, 1) noise laws, per dimension."""
    g = (eta - 1.0) - math.log(eta)
    return g if channel_kind == "complex" else 0.5 * g


def joint_gain_bits(eta, channel_kind):
    return joint_gain_nats(eta, channel_kind) / LN2


def c_sep(spec, solution):
    """Separate-decoding spectral efficiency in bits/dim at the solved eta."""
    eta = solution.eta if hasattr(solution, "eta") else float(solution)
    return spec.beta * _expect_info_nats(spec, eta) / LN2


def _io_spec(spec):
    if spec.detector.preset == "individually-optimal":
        return spec
    return replace(spec, detector=DetectorSpec.individually_optimal())


def c_joint(spec):
    """Joint-decoding spectral efficiency; the detector is forced to the
    individually optimal preset and branch ambiguity resolves to the smallest
    joint capacity."""
    spec = _io_spec(spec)
    sol = rsolve.solve_io(spec)
    eta = sol.eta
    prof = spec.snr_profile
    per_atom = tuple(
        (float(snr), _info_nats(spec.actual_prior, eta * snr) / LN2)
        for snr in prof.snrs()
    )
    sep_bits = spec.beta * _expect_info_nats(spec, eta) / LN2
    gain_bits = joint_gain_bits(eta, spec.channel_kind)
    return SpectralResult(
        c_sep=sep_bits,
        c_joint=sep_bits + gain_bits,
        joint_gain=gain_bits,
        per_atom_info=per_atom,
    )


# ---------------------------------------------------------------------------
# Load integrals: joint capacity and successive decoding
# ---------------------------------------------------------------------------

def _detector_eta(spec, detector):
    """Dominant efficiency of the given detector at spec's load."""
    preset = detector.preset
    if preset == "matched-filter":
        return rsolve.matched_filter_eta(spec)
    if preset == "lmmse":
        return rsolve.lmmse_eta(spec)
    if preset == "decorrelator":
        return rsolve.decorrelator_eta(spec)
    if preset == "individually-optimal":
        sol = rsolve.solve_io(replace(spec, detector=detector), grid_points=160)
        return sol.eta
    if preset == "jointly-optimal":
        raise rsolve.SolverError("successive decoding with the jointly-optimal limit is not supported")
    sub = replace(spec, detector=detector)
    if sub.q_prior.is_gaussian:
        return rsolve.general_linear_eta(sub)[0]
    return rsolve.solve_coupled(sub).eta


def _refine_jumps(spec, detector, xs, etas):
    """Split the grid at dominant-branch switches so no trapezoid panel
    straddles a jump of the integrand.

    A switch shows as a large eta change between adjacent grid points; its
    location is bisected and two one-sided samples are inserted, after which
    the jump contributes nothing to the integral (bounded integrand).
    """
    out_x = [xs[0]]
    out_eta = [etas[0]]
    for i in range(1, len(xs)):
        lo, hi = xs[i - 1], xs[i]
        e_lo, e_hi = etas[i - 1], etas[i]
        if abs(e_hi - e_lo) > 0.1 and lo > 0:
            for _ in range(30):
                mid = 0.5 * (lo + hi)
                e_mid = _detector_eta(spec.with_beta(mid), detector)
                if abs(e_mid - e_lo) < abs(e_mid - e_hi):
                    lo, e_lo = mid, e_mid
                else:
                    hi, e_hi = mid, e_mid
            out_x.extend([lo, hi])
            out_eta.extend([e_lo, e_hi])
        out_x.append(xs[i])
        out_eta.append(etas[i])
    return out_x, out_eta


def _per_user_info_integral(spec, detector, beta_grid):
    """integral over (0, beta] of E{I(eta(b') snr)} db', in nats.

    The integrand extends continuously to E{I(snr)} at zero load; across a
    phase transition it uses the dominant branch pointwise.
    """
    grid = np.asarray(beta_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 64:
        raise ValueError("beta grid must hold at least 64 points")
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise ValueError("beta grid must be strictly increasing and positive")
    xs = [0.0]
    etas = [1.0]
    for b in grid:
        xs.append(float(b))
        etas.append(_detector_eta(spec.with_beta(float(b)), detector))
    xs, etas = _refine_jumps(spec, detector, xs, etas)
    vals = [_expect_info_nats(spec, e) for e in etas]
    return float(np.trapezoid(vals, xs))


def default_beta_grid(beta, points=160):
    """Load grid ending exactly at beta: log-spaced near zero (where the
    integrand of the load integral has its 1/b weight) blended with linear
    spacing so the panels stay small at full load too."""
    half = max(points // 2, 32)
    log_part = np.geomspace(beta * 1e-4, beta, half)
    lin_part = np.linspace(beta / half, beta, half)
    return np.unique(np.concatenate([log_part, lin_part]))


def joint_via_integral(spec, beta_grid=None):
    """Joint capacity via the load integral of c_sep(b)/b, in bits/dim."""
    spec = _io_spec(spec)
    if beta_grid is None:
        beta_grid = default_beta_grid(spec.beta)
    return _per_user_info_integral(spec, spec.detector, beta_grid) / LN2


def joint_via_integral_multi(spec, betas, points=160):
    """joint_via_integral at several loads off one shared grid.

    The integrand is computed once on the union grid up to max(betas); each
    requested load reads the cumulative trapezoid at its own endpoint.
    """
    spec = _io_spec(spec)
    betas = sorted(float(b) for b in betas)
    bmax = betas[-1]
    grid = np.unique(np.concatenate([default_beta_grid(bmax, points), betas]))
    xs = [0.0]
    etas = [1.0]
    for b in grid:
        xs.append(float(b))
        etas.append(_detector_eta(spec.with_beta(float(b)), spec.detector))
    xs, etas = _refine_jumps(spec, spec.detector, xs, etas)
    vals = np.asarray([_expect_info_nats(spec, e) for e in etas])
    xs = np.asarray(xs)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(xs))])
    out = {}
    for b in betas:
        j = int(np.searchsorted(xs, b))
        out[b] = float(cum[j]) / LN2
    return out


def successive_decoding_se(spec, detector=None, beta_grid=None):
    """Spectral efficiency of successive decoding with a PME front end.

    Users are decoded in sequence against the yet-undecoded population, so
    user k sees the detector's efficiency at load k/L; the sum converges to
    the load integral of the per-user information.  With the individually
    optimal front end this equals the joint-decoding capacity.
    """
    detector = detector or spec.detector
    if beta_grid is None:
        beta_grid = default_beta_grid(spec.beta)
    return _per_user_info_integral(spec, detector, beta_grid) / LN2
