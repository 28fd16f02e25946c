"""Input distributions, SNR profiles and detector parameterizations.

Everything downstream (fixed-point solver, spectral efficiency, Monte Carlo)
assumes zero-mean unit-power inputs and an SNR profile whose weights sum to
one.  Those invariants are enforced here, once, at construction time, so the
numeric code never has to re-check them.

Complex symbols are stored as (re, im) pairs of floats; all complex-channel
math downstream operates on 2-vectors with circularly symmetric noise.
Limit noise levels of a detector (sigma -> 0, sigma -> infinity) are exact
sentinel states (0.0 and math.inf), never tiny/huge floats.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Constellation",
    "SnrProfile",
    "DetectorSpec",
    "make_standard",
    "two_group_profile",
    "db_to_linear",
    "linear_to_db",
    "SIGMA_ZERO",
    "SIGMA_INFINITE",
]

_TOL = 1e-12

# Exact sentinel noise states for the detector limits.
SIGMA_ZERO = 0.0
SIGMA_INFINITE = math.inf

REAL_KINDS = ("discrete-real", "gaussian-real")
COMPLEX_KINDS = ("discrete-complex", "gaussian-complex")
GAUSSIAN_KINDS = ("gaussian-real", "gaussian-complex")


def db_to_linear(db):
    """dB -> linear power ratio, 10**(db/10) in plain double arithmetic."""
    return 10.0 ** (db / 10.0)


def linear_to_db(x):
    """Linear power ratio -> dB."""
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class Constellation:
    """A finite symbol set with probabilities, or an analytic Gaussian marker.

    points: tuple of floats (real kinds) or tuple of (re, im) tuples
            (complex kinds); empty for gaussian kinds.
    probs:  matching tuple of probabilities; empty for gaussian kinds.
    """

    kind: str
    points: tuple = ()
    probs: tuple = ()
    label: str = ""

    def __post_init__(self):
        if self.kind not in REAL_KINDS + COMPLEX_KINDS:
            raise ValueError(f"unknown constellation kind {self.kind!r}")
        if self.is_gaussian:
            if self.points or self.probs:
                raise ValueError("gaussian constellations carry no points/probs")
            return
        if len(self.points) != len(self.probs) or not self.points:
            raise ValueError("points and probs must be non-empty and matched")
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < 0.0):
            raise ValueError("probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > _TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        pts = self.points_array()
        mean = p @ pts
        power = p @ (pts**2) if pts.ndim == 1 else p @ (pts**2).sum(axis=1)
        if np.max(np.abs(np.atleast_1d(mean))) > _TOL:
            raise ValueError(f"constellation mean {mean!r} is not zero")
        if abs(power - 1.0) > _TOL:
            raise ValueError(f"constellation power {power!r} is not 1")

    @property
    def is_gaussian(self):
        return self.kind in GAUSSIAN_KINDS

    @property
    def is_complex(self):
        return self.kind in COMPLEX_KINDS

    def points_array(self):
        """Symbol values as an ndarray: shape (n,) real or (n, 2) complex."""
        if self.is_gaussian:
            return np.zeros((0, 2)) if self.is_complex else np.zeros(0)
        a = np.asarray(self.points, dtype=float)
        if self.is_complex and (a.ndim != 2 or a.shape[1] != 2):
            raise ValueError("complex constellation points must be (re, im) pairs")
        return a

    def probs_array(self):
        return np.asarray(self.probs, dtype=float)

    def entropy_nats(self):
        """Entropy of the symbol distribution; inf for gaussian kinds."""
        if self.is_gaussian:
            return math.inf
        p = self.probs_array()
        p = p[p > 0]
        return float(-(p * np.log(p)).sum())

    def max_abs_point(self):
        """Largest symbol magnitude (saturation bound of the decision map)."""
        pts = self.points_array()
        if self.is_gaussian:
            return math.inf
        mags = np.abs(pts) if pts.ndim == 1 else np.linalg.norm(pts, axis=1)
        return float(mags.max())

    def to_json_dict(self):
        pts = self.points_array()
        if pts.ndim == 1:
            pairs = [[float(x), 0.0] for x in pts]
        else:
            pairs = [[float(re), float(im)] for re, im in pts]
        return {
            "kind": self.kind,
            "points": pairs,
            "probs": [float(p) for p in self.probs],
            "label": self.label,
        }

    @staticmethod
    def from_json_dict(d):
        kind = d["kind"]
        if kind in GAUSSIAN_KINDS:
            return Constellation(kind=kind, label=d.get("label", ""))
        pairs = d["points"]
        if kind in REAL_KINDS:
            for _, im in pairs:
                if im != 0.0:
                    raise ValueError("real constellation with nonzero imaginary part")
            points = tuple(float(re) for re, _ in pairs)
        else:
            points = tuple((float(re), float(im)) for re, im in pairs)
        probs = tuple(float(p) for p in d["probs"])
        label = d.get("label", "")
        try:
            return Constellation(kind=kind, points=points, probs=probs, label=label)
        except ValueError:
            # slightly off inputs are renormalized (with a warning)
            return custom_discrete(kind, points, probs, label=label)


def custom_discrete(kind, points, probs, label=""):
    """Build a discrete constellation, re-normalizing to zero mean / unit power.

    Warns if the required adjustment exceeds 1e-9 in either the shift or the
    scale; refuses degenerate (zero-power) inputs.
    """
    if kind not in ("discrete-real", "discrete-complex"):
        raise ValueError(f"custom constellations must be discrete, got {kind!r}")
    p = np.asarray(probs, dtype=float)
    if np.any(p < 0) or p.sum() <= 0:
        raise ValueError("invalid probabilities")
    p = p / p.sum()
    pts = np.asarray(points, dtype=float)
    if kind == "discrete-complex" and (pts.ndim != 2 or pts.shape[1] != 2):
        raise ValueError("complex points must be (re, im) pairs")
    mean = p @ pts
    centered = pts - mean
    power = p @ (centered**2) if centered.ndim == 1 else p @ (centered**2).sum(axis=1)
    if power <= 0:
        raise ValueError("constellation has zero power after centering")
    scale = 1.0 / math.sqrt(power)
    shift = float(np.max(np.abs(np.atleast_1d(mean))))
    if shift > 1e-9 or abs(scale - 1.0) > 1e-9:
        warnings.warn(
            f"constellation renormalized (shift {shift:.3g}, scale-1 {scale - 1.0:.3g})",
            stacklevel=2,
        )
    normalized = centered * scale
    if normalized.ndim == 1:
        tup = tuple(float(x) for x in normalized)
    else:
        tup = tuple((float(re), float(im)) for re, im in normalized)
    return Constellation(kind=kind, points=tup, probs=tuple(float(x) for x in p),
                         label=label)


@lru_cache(maxsize=None)
def separable_axes(constellation):
    """Factor a discrete complex constellation into independent real axes.

    If the points form a full product grid over the distinct re/im values and
    the probabilities factorize, returns ((axis_prior, axis_power), ...) for
    the two axes, where each axis_prior is a unit-power real constellation
    and axis_power is the variance carried by that axis.  Returns None when
    no exact factorization exists (e.g. 8psk) or an axis is degenerate.

    QPSK and square QAM factor this way, which lets complex-channel
    integrals be evaluated exactly with 1-D quadrature per axis.
    """
    c = constellation
    if c.kind != "discrete-complex":
        return None
    pts = c.points_array()
    probs = c.probs_array()
    re_vals = np.unique(pts[:, 0])
    im_vals = np.unique(pts[:, 1])
    if re_vals.size * im_vals.size != len(pts):
        return None
    grid = {}
    for (re, im), p in zip(pts, probs):
        if (re, im) in grid:
            return None
        grid[(re, im)] = p
    if len(grid) != len(pts):
        return None
    pr = np.array([sum(grid.get((re, im), np.nan) for im in im_vals) for re in re_vals])
    pi = np.array([sum(grid.get((re, im), np.nan) for re in re_vals) for im in im_vals])
    if np.any(np.isnan(pr)) or np.any(np.isnan(pi)):
        return None
    for i, re in enumerate(re_vals):
        for j, im in enumerate(im_vals):
            if abs(grid[(re, im)] - pr[i] * pi[j]) > 1e-12:
                return None
    axes = []
    for vals, marg in ((re_vals, pr), (im_vals, pi)):
        power = float(marg @ vals**2)
        if power < 1e-12:
            return None
        u = vals / math.sqrt(power)
        axes.append(
            (
                Constellation("discrete-real", tuple(float(x) for x in u),
                              tuple(float(p) for p in marg),
                              label=f"{c.label or c.kind}-axis"),
                power,
            )
        )
    return tuple(axes)


def _psk_points(m):
    pts = []
    for k in range(m):
        ang = 2.0 * math.pi * k / m
        pts.append((math.cos(ang), math.sin(ang)))
    return tuple(pts)


def make_standard(name):
    """Standard constellations: bpsk, qpsk, 8psk, 16qam, gaussian-real/complex.

    Deterministic and idempotent per name; complex sets are stored as real
    pairs with E|X|^2 = 1.
    """
    name = name.lower()
    if name == "bpsk":
        return Constellation("discrete-real", (1.0, -1.0), (0.5, 0.5), label="bpsk")
    if name == "qpsk":
        a = 1.0 / math.sqrt(2.0)
        pts = ((a, a), (a, -a), (-a, a), (-a, -a))
        return Constellation("discrete-complex", pts, (0.25,) * 4, label="qpsk")
    if name == "8psk":
        return Constellation("discrete-complex", _psk_points(8), (0.125,) * 8,
                             label="8psk")
    if name == "16qam":
        s = 1.0 / math.sqrt(10.0)
        levels = (-3.0 * s, -1.0 * s, 1.0 * s, 3.0 * s)
        pts = tuple((re, im) for re in levels for im in levels)
        return Constellation("discrete-complex", pts, (1.0 / 16.0,) * 16,
                             label="16qam")
    if name == "gaussian-real":
        return Constellation("gaussian-real", label="gaussian-real")
    if name == "gaussian-complex":
        return Constellation("gaussian-complex", label="gaussian-complex")
    raise ValueError(f"unknown standard constellation {name!r}")


@dataclass(frozen=True)
class SnrProfile:
    """Discrete SNR distribution: weighted atoms on the linear power scale."""

    atoms: tuple  # of (snr_linear, weight)

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("SNR profile needs at least one atom")
        w = np.asarray([a[1] for a in self.atoms], dtype=float)
        s = np.asarray([a[0] for a in self.atoms], dtype=float)
        if np.any(s <= 0.0):
            raise ValueError("every SNR must be > 0 (linear scale)")
        if np.any(w < 0.0) or abs(w.sum() - 1.0) > _TOL:
            raise ValueError("weights must be nonnegative and sum to 1")

    def snrs(self):
        return np.asarray([a[0] for a in self.atoms], dtype=float)

    def weights(self):
        return np.asarray([a[1] for a in self.atoms], dtype=float)

    def mean_snr(self):
        return float(self.weights() @ self.snrs())

    def expect(self, values):
        """Weighted average of per-atom values (same order as .atoms)."""
        return float(self.weights() @ np.asarray(values, dtype=float))

    def to_json_dict(self):
        return {"atoms": [{"snr_db": linear_to_db(s), "weight": float(w)}
                          for s, w in self.atoms]}

    @staticmethod
    def from_json_dict(d):
        atoms = tuple((db_to_linear(float(a["snr_db"])), float(a["weight"]))
                      for a in d["atoms"])
        return SnrProfile(atoms)


def equal_power_profile(snr_db):
    """Single-atom profile at the given SNR in dB."""
    return SnrProfile(((db_to_linear(snr_db), 1.0),))


def two_group_profile(mean_snr_db, gap_db):
    """Two equal-population groups separated by gap_db, with the stated mean.

    Atoms are (s, g*s) at weight 1/2 each, g = 10**(gap_db/10), scaled so the
    weighted linear mean equals 10**(mean_snr_db/10).
    """
    if gap_db < 0:
        raise ValueError("gap_db must be >= 0")
    g = db_to_linear(gap_db)
    mean = db_to_linear(mean_snr_db)
    s = 2.0 * mean / (1.0 + g)
    return SnrProfile(((s, 0.5), (g * s, 0.5)))


_PRESETS = ("matched-filter", "decorrelator", "lmmse", "jointly-optimal",
            "individually-optimal", "custom")


@dataclass(frozen=True)
class DetectorSpec:
    """Posterior-mean detector: postulated prior q plus postulated noise level.

    postulated_prior may be None for the two optimal presets, meaning "same as
    the actual prior"; it is resolved when paired with a system spec.  sigma
    is a positive float, or the exact sentinels SIGMA_ZERO / SIGMA_INFINITE.
    """

    postulated_prior: Constellation | None
    sigma: float
    preset: str = "custom"

    def __post_init__(self):
        if self.preset not in _PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if not (self.sigma >= 0.0):  # rejects NaN and negatives
            raise ValueError("sigma must be >= 0 (0 and inf are limit states)")
        q = self.postulated_prior
        if self.preset == "matched-filter":
            if self.sigma != SIGMA_INFINITE:
                raise ValueError("matched-filter preset requires the infinite-noise limit")
        elif self.preset == "lmmse":
            if q is None or not q.is_gaussian or self.sigma != 1.0:
                raise ValueError("lmmse preset requires a gaussian prior and sigma=1")
        elif self.preset == "decorrelator":
            if q is None or not q.is_gaussian or self.sigma != SIGMA_ZERO:
                raise ValueError("decorrelator preset requires a gaussian prior and the zero-noise limit")
        elif self.preset == "jointly-optimal":
            if self.sigma != SIGMA_ZERO:
                raise ValueError("jointly-optimal preset requires the zero-noise limit")
        elif self.preset == "individually-optimal":
            if self.sigma != 1.0:
                raise ValueError("individually-optimal preset requires sigma=1")
        else:  # custom
            if q is None:
                raise ValueError("custom detector needs an explicit postulated prior")
            if q.is_gaussian and self.sigma == 1.0:
                raise ValueError("gaussian prior with sigma=1 is the lmmse preset")
            if self.is_limit:
                raise ValueError("limit noise levels belong to the named presets")
        if q is not None and not q.is_gaussian:
            # Postulated priors are held to the same normalization as actual ones.
            _ = q.points_array()

    @property
    def is_limit(self):
        return self.sigma == SIGMA_ZERO or self.sigma == SIGMA_INFINITE

    def resolved_prior(self, actual_prior):
        """The postulated prior, with None meaning the actual prior."""
        q = self.postulated_prior
        if q is None:
            return actual_prior
        if self.preset in ("jointly-optimal", "individually-optimal") and q != actual_prior:
            raise ValueError(f"{self.preset} preset requires the postulated prior to equal the actual prior")
        return q

    # Named constructors
    @staticmethod
    def matched_filter(prior=None):
        return DetectorSpec(prior, SIGMA_INFINITE, "matched-filter")

    @staticmethod
    def lmmse(kind="real"):
        g = make_standard("gaussian-real" if kind == "real" else "gaussian-complex")
        return DetectorSpec(g, 1.0, "lmmse")

    @staticmethod
    def decorrelator(kind="real"):
        g = make_standard("gaussian-real" if kind == "real" else "gaussian-complex")
        return DetectorSpec(g, SIGMA_ZERO, "decorrelator")

    @staticmethod
    def individually_optimal(prior=None):
        return DetectorSpec(prior, 1.0, "individually-optimal")

    @staticmethod
    def jointly_optimal(prior=None):
        return DetectorSpec(prior, SIGMA_ZERO, "jointly-optimal")

    @staticmethod
    def custom(prior, sigma):
        if not (sigma > 0.0) or math.isinf(sigma):
            raise ValueError("custom detectors use a finite sigma > 0; use the presets for limits")
        return DetectorSpec(prior, float(sigma), "custom")
