"""Seeded Monte Carlo coincidences, heralding and coarse-grained binning."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from .errors import DomainError, InputError
from .model import UM_PER_MM, Basis, marginal_variance, pair_widths

BLOCK_SIZE = 1 << 16
_SQRT2 = math.sqrt(2.0)


class CoincidenceEvent(NamedTuple):
    basis: Basis
    a: tuple
    b: tuple


@dataclass
class EventSet:
    """Detected pairs in one basis, stored column-wise.

    ``a`` and ``b`` are ``(n, 2)`` arrays holding (x, y) or (k_x, k_y).
    ``correlated`` is simulation ground truth and is ``None`` for measured data.
    """

    basis: Basis
    a: np.ndarray
    b: np.ndarray
    correlated: np.ndarray | None = None

    def __post_init__(self):
        self.basis = Basis.parse(self.basis)
        self.a = np.asarray(self.a, dtype=float).reshape(-1, 2)
        self.b = np.asarray(self.b, dtype=float).reshape(-1, 2)
        if self.a.shape != self.b.shape:
            raise InputError("arm A and arm B must have the same number of events")

    def __len__(self):
        return self.a.shape[0]

    def __iter__(self):
        for ra, rb in zip(self.a, self.b):
            yield CoincidenceEvent(self.basis, tuple(ra), tuple(rb))

    def __getitem__(self, idx):
        corr = None if self.correlated is None else self.correlated[idx]
        return EventSet(self.basis, self.a[idx], self.b[idx], corr)


@dataclass
class PairSet:
    """One-dimensional pairs ``(a, b)`` after heralding."""

    basis: Basis
    a: np.ndarray
    b: np.ndarray
    correlated: np.ndarray | None = None

    def __post_init__(self):
        self.basis = Basis.parse(self.basis)
        self.a = np.asarray(self.a, dtype=float).ravel()
        self.b = np.asarray(self.b, dtype=float).ravel()

    def __len__(self):
        return self.a.size


def _block_seeds(seed, n_pairs):
    n_blocks = max(1, -(-n_pairs // BLOCK_SIZE))
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(n_blocks)


def _sample_axis(rng, n, s_diff, s_sum, m, corr):
    # correlated: rotated coordinates u=(a+b)/sqrt2, v=(b-a)/sqrt2
    u = rng.normal(0.0, s_sum / _SQRT2, n)
    v = rng.normal(0.0, s_diff / _SQRT2, n)
    ia = rng.normal(0.0, m, n)
    ib = rng.normal(0.0, m, n)
    a = np.where(corr, (u - v) / _SQRT2, ia)
    b = np.where(corr, (u + v) / _SQRT2, ib)
    return a, b


def sample_pairs(state, n_pairs, basis, seed):
    """Draw ``n_pairs`` coincidences with 2-D coordinates per arm.

    Pairs are generated in blocks of ``BLOCK_SIZE`` with child seeds spawned
    from ``SeedSequence(seed)``, so any block can be produced independently
    and the result does not depend on how the work is split.
    """
    basis = Basis.parse(basis)
    n_pairs = int(n_pairs)
    if n_pairs < 0:
        raise DomainError("n_pairs must be non-negative")
    s_d, s_s = pair_widths(state, basis)
    m = math.sqrt(marginal_variance(state, basis))
    a = np.empty((n_pairs, 2))
    b = np.empty((n_pairs, 2))
    corr = np.empty(n_pairs, dtype=bool)
    for k, ss in enumerate(_block_seeds(seed, n_pairs)):
        lo = k * BLOCK_SIZE
        n = min(BLOCK_SIZE, n_pairs - lo)
        if n <= 0:
            break
        rng = np.random.default_rng(ss)
        c = rng.random(n) < state.q
        for axis in (0, 1):
            a[lo:lo + n, axis], b[lo:lo + n, axis] = _sample_axis(rng, n, s_d, s_s, m, c)
        corr[lo:lo + n] = c
    return EventSet(basis, a, b, corr)


def circular_mask(events, radius):
    """Keep events whose points lie within ``radius`` of the origin in both arms
    (an iris-defined circular region instead of the square grid)."""
    ra = np.hypot(events.a[:, 0], events.a[:, 1])
    rb = np.hypot(events.b[:, 0], events.b[:, 1])
    return events[(ra <= radius) & (rb <= radius)]


def herald_width(state, basis):
    """Herald window unit: sigma (um) in position, kappa (1/mm) in momentum."""
    return state.sigma if Basis.parse(basis) is Basis.POSITION else state.kappa


def herald_postselect(events, state, window_multiple=2.0):
    """Keep pairs whose y (k_y) coordinates match within the window; emit x pairs.

    Position keeps ``|y_B - y_A| <= window * sigma``; momentum keeps
    ``|k_yB + k_yA| <= window * kappa``.
    """
    if len(events) == 0:
        return PairSet(events.basis, np.empty(0), np.empty(0),
                       None if events.correlated is None else np.empty(0, dtype=bool))
    width = herald_width(state, events.basis)
    ya, yb = events.a[:, 1], events.b[:, 1]
    resid = yb + ya if events.basis.anticorrelated else yb - ya
    keep = np.abs(resid) <= window_multiple * width
    corr = None if events.correlated is None else events.correlated[keep]
    return PairSet(events.basis, events.a[keep, 0], events.b[keep, 0], corr)


def herald_acceptance(state, window_multiple=2.0):
    """Probabilities that a correlated / accidental pair passes the herald.

    Both are the same in position and momentum.
    """
    if math.isinf(window_multiple):
        return 1.0, 1.0
    acc_corr = math.erf(window_multiple / _SQRT2)
    t = state.product
    acc_acc = math.erf(window_multiple * t / math.sqrt(1.0 + t * t))
    return acc_corr, acc_acc


def heralded_state(state, window_multiple=2.0):
    """State describing the x-distribution of pairs that survive heralding."""
    c, a = herald_acceptance(state, window_multiple)
    num = state.q * c
    den = num + (1.0 - state.q) * a
    return state.with_q(num / den if den > 0 else 0.0)


@dataclass(frozen=True)
class GridSpec:
    """Uniform 1-D binning: ``n`` cells of width ``delta`` starting at ``origin``."""

    origin: float
    delta: float
    n: int

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError("cell size must be positive")
        if int(self.n) < 2:
            raise DomainError("a grid needs at least two cells")

    @classmethod
    def centered(cls, delta, n):
        return cls(-0.5 * n * delta, float(delta), int(n))

    @property
    def edges(self):
        return self.origin + self.delta * np.arange(self.n + 1)

    @property
    def centers(self):
        return self.origin + self.delta * (np.arange(self.n) + 0.5)

    def index(self, x):
        """Cell index per coordinate, -1 when outside the grid."""
        idx = np.floor((np.asarray(x, dtype=float) - self.origin) / self.delta).astype(np.int64)
        idx[(idx < 0) | (idx >= self.n)] = -1
        return idx

    def to_dict(self):
        return {"origin": self.origin, "delta": self.delta, "n": self.n}


@dataclass
class JointHistogram:
    counts: np.ndarray
    grid_a: GridSpec
    grid_b: GridSpec
    basis: Basis
    out_of_range: int = 0

    def __post_init__(self):
        self.basis = Basis.parse(self.basis)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (self.grid_a.n, self.grid_b.n):
            raise InputError("count array does not match the grid shape")
        if np.any(self.counts < 0):
            raise InputError("counts must be non-negative")

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def n_bins(self):
        return self.counts.size

    def marginal_a(self):
        return self.counts.sum(axis=1)

    def marginal_b(self):
        return self.counts.sum(axis=0)

    def __add__(self, other):
        if (self.grid_a, self.grid_b, self.basis) != (other.grid_a, other.grid_b, other.basis):
            raise InputError("cannot merge histograms with different grids or bases")
        return JointHistogram(self.counts + other.counts, self.grid_a, self.grid_b,
                              self.basis, self.out_of_range + other.out_of_range)

    def cell_pairs(self):
        """Expand counts into pairs at cell centres (row-major order)."""
        ia, ib = np.nonzero(self.counts)
        reps = self.counts[ia, ib]
        return PairSet(self.basis, np.repeat(self.grid_a.centers[ia], reps),
                       np.repeat(self.grid_b.centers[ib], reps))


def bin_events(pairs, grid_a, grid_b=None):
    """Coarse-grain 1-D pairs; out-of-range pairs are counted, not binned."""
    grid_b = grid_a if grid_b is None else grid_b
    ia = grid_a.index(pairs.a)
    ib = grid_b.index(pairs.b)
    ok = (ia >= 0) & (ib >= 0)
    flat = np.bincount(ia[ok] * grid_b.n + ib[ok], minlength=grid_a.n * grid_b.n)
    return JointHistogram(flat.reshape(grid_a.n, grid_b.n), grid_a, grid_b, pairs.basis,
                          int(np.count_nonzero(~ok)))


@dataclass(frozen=True)
class CellCalibration:
    """Coarse-graining cell sizes with fractional 1-sigma uncertainties."""

    dx: float  # um
    dk: float  # 1/mm
    rel_dx: float = 0.0
    rel_dk: float = 0.0

    @property
    def dx_mm(self):
        return self.dx / UM_PER_MM

    @property
    def product(self):
        """Dimensionless ``dx * dk``."""
        return self.dx_mm * self.dk

    @property
    def sigma_dx(self):
        return self.rel_dx * self.dx

    @property
    def sigma_dk(self):
        return self.rel_dk * self.dk


def calibration_cells(delta_b, M, wavelength, f_eff, rel_M=0.0, rel_f=0.0):
    """Cell sizes from the detector bin ``delta_b`` (um), magnification ``M``,
    ``wavelength`` (nm) and effective focal length ``f_eff`` (mm).

    Fractional uncertainties on ``M`` and ``f_eff`` carry over one-to-one to
    the fractional uncertainties of ``dx`` and ``dk``.
    """
    for name, v in (("delta_b", delta_b), ("M", M), ("wavelength", wavelength), ("f_eff", f_eff)):
        if not v > 0:
            raise DomainError(f"{name} must be positive, got {v}")
    if rel_M < 0 or rel_f < 0:
        raise DomainError("fractional uncertainties must be non-negative")
    dx = delta_b / M
    dk = 2.0 * math.pi * (delta_b / UM_PER_MM) / ((wavelength * 1e-6) * f_eff)
    return CellCalibration(dx, dk, rel_M, rel_f)


def default_grids(calibration, n_cells=100):
    return (GridSpec.centered(calibration.dx, n_cells), GridSpec.centered(calibration.dk, n_cells))

