"""Pitman-Yor mixture (PYM) entropy estimator.

The support is countably infinite. Given discount ``d`` and concentration
``alpha`` the posterior over the distribution is a Dirichlet over the
occupied bins plus a tail mass that is itself Pitman-Yor distributed, which
gives the conditional entropy moments in closed form. The hyperprior is
flat in ``d`` on ``[0, 1)`` and in the prior mean entropy
``xi = psi(alpha + 1) - psi(1 - d)`` along ``alpha``, so
``p(d, alpha) ~ psi1(alpha + 1)``.

``alpha`` is parametrized as ``gamma - d`` with ``gamma > 0`` on a log grid,
``d`` on Gauss-Legendre nodes.
"""
import math

import numpy as np
from scipy.special import digamma, gammaln, polygamma

from ..errors import AccuracyError
from .base import (LN2, EntropyEstimate, Estimator, as_counts, count_profile,
                   dirichlet_entropy_moments, log_rising, posterior_average,
                   require_samples)

LOG_GAMMA_RANGE = (math.log(1e-10), math.log(1e9))
N_D = 64
N_GAMMA = 160
LOG_WINDOW = 30.0
BOUNDARY_DROP = 18.5


def py_prior_entropy_moments(d, alpha):
    """Mean and second moment (nats) of the entropy of a PY(d, alpha) draw."""
    d = np.asarray(d, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    mean = digamma(alpha + 1.0) - digamma(1.0 - d)
    g2 = digamma(2.0 + alpha)
    t1 = (1.0 - d) / (alpha + 1.0) * ((digamma(2.0 - d) - g2) ** 2
                                      + polygamma(1, 2.0 - d) - polygamma(1, 2.0 + alpha))
    t2 = (alpha + d) / (alpha + 1.0) * ((digamma(1.0 - d) - g2) ** 2 - polygamma(1, 2.0 + alpha))
    return mean, t1 + t2


def _log_sum_alpha_ld(alpha, d, k):
    """``sum_{l=1}^{k-1} log(alpha + l d)`` for arrays ``alpha``, ``d``."""
    if k <= 1:
        return np.zeros_like(alpha)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (k - 1) * np.log(alpha)
    z = alpha / np.where(d > 0, d, 1.0)
    exact = (d > 0) & (z < 1e6)
    out = np.where(exact, (k - 1) * np.log(np.where(d > 0, d, 1.0))
                   + log_rising(z + 1.0, k - 1.0), out)
    # large alpha/d: expand log1p(l d / alpha)
    x = np.where(exact, 0.0, d / alpha)
    l = np.arange(1, k, dtype=float)
    s1, s2, s3 = l.sum(), (l ** 2).sum(), (l ** 3).sum()
    out = out + np.where(exact, 0.0, s1 * x - s2 * x * x / 2.0 + s3 * x ** 3 / 3.0)
    return out


def _log_integrand(d, gamma, values, mult, N):
    alpha = gamma - d
    k = int(mult.sum())
    log_ev = (_log_sum_alpha_ld(alpha, d, k)
              + np.sum(mult * (gammaln(values - d[..., None]) - gammaln(1.0 - d[..., None])),
                       axis=-1)
              - log_rising(alpha + 1.0, N - 1.0))
    prior = polygamma(1, alpha + 1.0)
    return log_ev + np.log(prior) + np.log(gamma)  # d alpha = gamma d log gamma


def _conditional_moments(d, gamma, values, mult, N):
    """Posterior entropy moments (nats) given flat arrays of (d, gamma)."""
    alpha = gamma - d
    k = mult.sum()
    a_star = alpha + k * d
    A = alpha + N
    a = np.concatenate([values[None, :] - d[:, None], a_star[:, None]], axis=1)
    m = np.concatenate([mult, [1.0]])
    dmean, dsecond = dirichlet_entropy_moments(a, m)
    t_mean, t_second = py_prior_entropy_moments(d, a_star)
    # E[p_* D] by tilting the Dirichlet with a_* -> a_* + 1
    a_t = a.copy()
    a_t[:, -1] += 1.0
    d_tilt = digamma(A + 2.0) - np.sum(m * a_t * digamma(a_t + 1.0), axis=1) / (A + 1.0)
    e_pd = a_star / A * d_tilt
    e_p = a_star / A
    e_p2 = a_star * (a_star + 1.0) / (A * (A + 1.0))
    mean = dmean + e_p * t_mean
    second = dsecond + 2.0 * e_pd * t_mean + e_p2 * t_second
    return mean, second


def _gl01(n, lo=0.0, hi=1.0):
    x, w = np.polynomial.legendre.leggauss(n)
    return lo + (hi - lo) * 0.5 * (x + 1.0), 0.5 * (hi - lo) * w


def _evaluate(d_nodes, d_w, lg_nodes, values, mult, N):
    D, LG = np.meshgrid(d_nodes, lg_nodes, indexing="ij")
    lw = _log_integrand(D.ravel(), np.exp(LG.ravel()), values, mult, N)
    lw = lw.reshape(D.shape) + np.log(d_w)[:, None]
    return D, LG, lw


def pym_entropy(hist):
    """PYM posterior mean and standard deviation of the entropy (bits)."""
    counts = as_counts(hist)
    N = require_samples(counts)
    values, mult = count_profile(counts)
    k = int(mult.sum())
    if k == N and N > 1:
        raise AccuracyError("PYM posterior is improper when every count is a singleton")
    if k == 1:
        # near d -> 1, alpha -> -d the hyperprior weight integrates like 1/gamma
        raise AccuracyError("PYM posterior is improper with a single occupied bin")
    d_nodes, d_w = _gl01(N_D)
    lg = np.linspace(*LOG_GAMMA_RANGE, N_GAMMA)
    D, LG, lw = _evaluate(d_nodes, d_w, lg, values, mult, N)
    if not np.all(np.isfinite(lw)):
        raise AccuracyError("non-finite PYM posterior on the coarse grid")
    top = lw.max()
    edge = max(lw[:, 0].max(), lw[:, -1].max())
    if edge > top - BOUNDARY_DROP:
        raise AccuracyError("PYM posterior has non-negligible mass at the concentration bounds")
    # refine on the box holding the bulk of the posterior
    i_idx, j_idx = np.nonzero(lw > top - LOG_WINDOW)
    d_lo = 0.0 if i_idx.min() == 0 else d_nodes[i_idx.min() - 1]
    d_hi = 1.0 if i_idx.max() == N_D - 1 else d_nodes[i_idx.max() + 1]
    g_lo = lg[max(j_idx.min() - 1, 0)]
    g_hi = lg[min(j_idx.max() + 1, N_GAMMA - 1)]
    d_nodes, d_w = _gl01(N_D, d_lo, d_hi)
    lg = np.linspace(g_lo, g_hi, N_GAMMA)
    D, LG, lw = _evaluate(d_nodes, d_w, lg, values, mult, N)
    mean, second = _conditional_moments(D.ravel(), np.exp(LG.ravel()), values, mult, N)
    m, var, _ = posterior_average(lw.ravel(), mean, second)
    return EntropyEstimate(m / LN2, math.sqrt(var) / LN2, Estimator.PYM, N, counts.size)
