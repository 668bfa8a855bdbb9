"""Parametric Poisson maximum-likelihood entropy.

Cell counts are modelled as Poisson with mean
``lambda = alpha * S + beta * B`` where ``S`` is the correlated Gaussian pair
template (widths fixed by a prior cross-section fit) and ``B`` the accidental
background template, both normalized over the grid. The entropy is that of
the fitted ``lambda``; its uncertainty is propagated from the inverse
Fisher information of ``(alpha, beta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from ..errors import DomainError, FitError
from ..model import Basis, gaussian_cell_mass, gaussian_pair_cell_mass
from .base import EntropyEstimate, Estimator, as_counts

GRAD_RTOL = 1e-8
MAX_ITER = 200
LAMBDA_FLOOR = 1e-12


@dataclass(frozen=True)
class GaussianShape:
    """Gaussian pair shape in the native units of a basis."""

    s_diff: float
    s_sum: float
    center_a: float = 0.0
    center_b: float = 0.0

    @property
    def marginal_std(self):
        return 0.5 * math.hypot(self.s_diff, self.s_sum)


@dataclass
class PoissonFit:
    alpha: float
    beta: float
    fisher: np.ndarray
    gradient_norm: float
    templates: tuple

    @property
    def covariance(self):
        return np.linalg.pinv(self.fisher)

    @property
    def standard_errors(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def weight(self):
        """Correlated fraction ``alpha / (alpha + beta)``."""
        return self.alpha / (self.alpha + self.beta)

    @property
    def weight_variance(self):
        tot = self.alpha + self.beta
        g = np.array([self.beta, -self.alpha]) / tot ** 2
        return float(g @ self.covariance @ g)

    def rate(self):
        s, b = self.templates
        return self.alpha * s + self.beta * b


def _gauss_const(x, amp, mu, s, c):
    return amp * np.exp(-0.5 * ((x - mu) / s) ** 2) + c


def _gauss(x, amp, mu, s):
    return amp * np.exp(-0.5 * ((x - mu) / s) ** 2)


def _fit_peak(x, y, with_pedestal, width_guess):
    i = int(np.argmax(y))
    sigma = np.sqrt(y + 1.0)
    if with_pedestal:
        p0 = [max(y[i] - np.median(y), 1.0), x[i], width_guess, max(float(np.median(y)), 0.0)]
        f = _gauss_const
        bounds = ([0.0, x[0], 1e-3 * width_guess, 0.0], [np.inf, x[-1], np.inf, np.inf])
    else:
        p0 = [max(y[i], 1.0), x[i], width_guess]
        f = _gauss
        bounds = ([0.0, x[0], 1e-3 * width_guess], [np.inf, x[-1], np.inf])
    try:
        popt, _ = curve_fit(f, x, y, p0=p0, sigma=sigma, bounds=bounds, maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"Gaussian cross-section fit failed: {exc}") from exc
    return popt


def fit_shape(hist, basis=None, window_cells=12):
    """Estimate the Gaussian pair shape from a joint histogram.

    The narrow width comes from a Gaussian-plus-pedestal fit to the profile
    of ``b - a`` (position) or ``a + b`` (momentum) around its maximum; the
    wide width follows from the fitted single-arm marginal, whose variance is
    a quarter of the sum of both squared widths. Binning is corrected with
    Sheppard's term.
    """
    basis = Basis.parse(basis if basis is not None else hist.basis)
    ga, gb = hist.grid_a, hist.grid_b
    if not math.isclose(ga.delta, gb.delta, rel_tol=1e-12):
        raise DomainError("shape fitting needs equal cell sizes in both arms")
    delta = ga.delta
    counts = np.asarray(hist.counts, dtype=float)
    ca, cb = ga.centers, gb.centers

    ma = _fit_peak(ca, counts.sum(axis=1), False, 10 * delta)
    mb = _fit_peak(cb, counts.sum(axis=0), False, 10 * delta)
    m2 = 0.5 * (ma[2] ** 2 + mb[2] ** 2) - delta ** 2 / 12.0

    ia, ib = np.indices(counts.shape)
    if basis.anticorrelated:
        coord = ca[ia] + cb[ib]
    else:
        coord = cb[ib] - ca[ia]
    lo = coord.min()
    idx = np.rint((coord - lo) / delta).astype(np.int64)
    profile = np.bincount(idx.ravel(), weights=counts.ravel())
    px = lo + delta * np.arange(profile.size)
    peak = int(np.argmax(profile))
    sl = slice(max(peak - window_cells, 0), min(peak + window_cells + 1, profile.size))
    pk = _fit_peak(px[sl], profile[sl], True, 2 * delta)
    narrow2 = max(pk[2] ** 2 - delta ** 2 / 6.0, (0.05 * delta) ** 2)
    wide2 = max(4.0 * m2 - narrow2, narrow2)
    center_a = float(ma[1])
    if basis.anticorrelated:
        shape = GaussianShape(math.sqrt(wide2), math.sqrt(narrow2), center_a, float(pk[1]) - center_a)
    else:
        shape = GaussianShape(math.sqrt(narrow2), math.sqrt(wide2), center_a, center_a + float(pk[1]))
    return shape


def templates(hist, shape, background="product"):
    """Normalized correlated and background templates on the histogram grid."""
    ea, eb = hist.grid_a.edges, hist.grid_b.edges
    s = gaussian_pair_cell_mass(shape.s_diff, shape.s_sum, ea, eb, shape.center_a, shape.center_b)
    if background == "product":
        m = shape.marginal_std
        b = np.outer(gaussian_cell_mass(m, ea, shape.center_a),
                     gaussian_cell_mass(m, eb, shape.center_b))
    elif background == "flat":
        b = np.ones_like(s)
    else:
        raise DomainError(f"unknown background model {background!r}")
    return s / s.sum(), b / b.sum()


def fit_poisson_mixture(counts, signal, background):
    """Maximize ``sum n log(lambda) - lambda`` over ``alpha, beta >= 0``.

    With normalized templates the optimum has ``alpha + beta = N`` and the
    problem reduces to the concave 1-D search over ``w = alpha / N``, solved
    by safeguarded Newton iterations with the analytic gradient.
    """
    n = np.asarray(counts, dtype=float).ravel()
    s = np.asarray(signal, dtype=float).ravel()
    b = np.asarray(background, dtype=float).ravel()
    N = n.sum()
    if N <= 0:
        raise DomainError("Poisson fit needs at least one count")
    occ = n > 0
    no, so, bo = n[occ], s[occ], b[occ]
    diff = so - bo

    def grad(w):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return float(np.sum(no * diff / (w * so + (1.0 - w) * bo)))

    def curv(w):
        lam = w * so + (1.0 - w) * bo
        return -float(np.sum(no * diff * diff / (lam * lam)))

    tol = GRAD_RTOL * N
    g1, g0 = grad(1.0), grad(0.0)
    if not np.isnan(g1) and g1 >= 0.0:
        w = 1.0
    elif not np.isnan(g0) and g0 <= 0.0:
        w = 0.0
    else:
        lo, hi = 0.0, 1.0
        w = 0.5
        for _ in range(MAX_ITER):
            g = grad(w)
            if abs(g) < tol:
                break
            if g > 0:
                lo = w
            else:
                hi = w
            step = w - g / curv(w)
            w = step if lo < step < hi else 0.5 * (lo + hi)
        else:
            raise FitError("Poisson likelihood ascent did not converge", gradient_norm=abs(grad(w)))
    alpha, beta = w * N, (1.0 - w) * N
    lam = alpha * s + beta * b
    # cells with a vanishing expected count carry no usable information
    pos = lam > LAMBDA_FLOOR * N
    with np.errstate(divide="ignore", invalid="ignore"):
        ga = float(np.sum(n[pos] * s[pos] / lam[pos])) - 1.0
        gb = float(np.sum(n[pos] * b[pos] / lam[pos])) - 1.0
    # active bound constraints do not count toward the projected gradient
    proj = [0.0 if (w == 0.0 and ga < 0) else ga, 0.0 if (w == 1.0 and gb < 0) else gb]
    fisher = np.array([
        [np.sum(s[pos] ** 2 / lam[pos]), np.sum(s[pos] * b[pos] / lam[pos])],
        [np.sum(s[pos] * b[pos] / lam[pos]), np.sum(b[pos] ** 2 / lam[pos])],
    ])
    return PoissonFit(alpha, beta, fisher, float(np.hypot(*proj)),
                      (np.asarray(signal, float), np.asarray(background, float)))


def _entropy_bits(p):
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def _dlog(p):
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = np.log2(p[pos])
    return out


def _resolve(hist, basis, shape, background):
    if getattr(hist, "grid_a", None) is None:
        raise DomainError("the ML estimator needs a JointHistogram with grid metadata")
    basis = Basis.parse(basis if basis is not None else hist.basis)
    counts = as_counts(hist).reshape(hist.counts.shape)
    if counts.sum() < 1:
        raise DomainError("entropy estimation needs at least one count")
    if shape is None:
        shape = fit_shape(hist, basis)
    s, b = templates(hist, shape, background)
    return counts, fit_poisson_mixture(counts, s, b)


def ml_entropy(hist, basis=None, shape=None, background="product"):
    """Joint entropy (bits) of the fitted Poisson rate."""
    counts, fit = _resolve(hist, basis, shape, background)
    s, b = fit.templates
    p = fit.weight * s + (1.0 - fit.weight) * b
    dh = -float(np.sum((s - b) * _dlog(p)))
    std = abs(dh) * math.sqrt(max(fit.weight_variance, 0.0))
    return EntropyEstimate(_entropy_bits(p.ravel()), std, Estimator.ML, int(counts.sum()), counts.size)


def ml_conditional_entropy(hist, basis=None, shape=None, background="product"):
    """``H(b|a)`` (bits) of the fitted rate, delta-method uncertainty."""
    counts, fit = _resolve(hist, basis, shape, background)
    s, b = fit.templates
    w = fit.weight
    p = w * s + (1.0 - w) * b
    pa = p.sum(axis=1)
    h = _entropy_bits(p.ravel()) - _entropy_bits(pa)
    dh = (-float(np.sum((s - b) * _dlog(p)))
          + float(np.sum((s.sum(axis=1) - b.sum(axis=1)) * _dlog(pa))))
    std = abs(dh) * math.sqrt(max(fit.weight_variance, 0.0))
    return EntropyEstimate(h, std, Estimator.ML, int(counts.sum()), counts.size)
