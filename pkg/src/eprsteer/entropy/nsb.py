"""Dirichlet-mixture (NSB) entropy estimator.

Symmetric Dirichlet priors with concentration ``beta`` are mixed with the
weight ``d xi / d beta`` where ``xi(beta)`` is the prior mean entropy, so the
induced prior over entropy is flat on ``[0, log K]``.
"""
import math

import numpy as np

from ..errors import AccuracyError, DomainError
from .base import (LN2, EntropyEstimate, Estimator, as_counts, count_profile,
                   dirichlet_entropy_moments, log_rising, posterior_average,
                   require_samples, trigamma_gap)

LOG_BETA_RANGE = (math.log(1e-10), math.log(1e14))
N_COARSE = 400
N_FINE = 256
LOG_WINDOW = 40.0
BOUNDARY_DROP = 18.5  # ~1e-8 of the peak density


def _log_integrand(log_beta, values, mult, K, N):
    beta = np.exp(log_beta)
    kb = K * beta
    b = beta[:, None]
    log_ev = -log_rising(kb, N) + np.sum(mult * log_rising(b, values[None, :]), axis=1)
    prior = trigamma_gap(K, beta)
    return log_ev + np.log(prior) + log_beta  # d beta = beta d log beta


def _moments(log_beta, values, mult, K):
    beta = np.exp(log_beta)[:, None]
    k0 = K - mult.sum()
    a = np.concatenate([values[None, :] + beta, beta], axis=1)
    m = np.concatenate([mult, [k0]])
    return dirichlet_entropy_moments(a, m)


def nsb_entropy(hist, n_bins=None):
    """NSB posterior mean and standard deviation of the entropy (bits).

    ``n_bins`` is the nominal alphabet size; it defaults to the size of the
    count array (for a joint histogram, every grid cell).
    """
    counts = as_counts(hist)
    N = require_samples(counts)
    K = counts.size if n_bins is None else int(n_bins)
    values, mult = count_profile(counts)
    if K < mult.sum():
        raise DomainError(f"n_bins={K} is smaller than the {int(mult.sum())} occupied bins")
    if K == 1:
        return EntropyEstimate(0.0, 0.0, Estimator.NSB, N, K)
    grid = np.linspace(*LOG_BETA_RANGE, N_COARSE)
    lw = _log_integrand(grid, values, mult, K, N)
    if not np.all(np.isfinite(lw)):
        raise AccuracyError("non-finite NSB posterior on the coarse grid")
    keep = np.nonzero(lw > lw.max() - LOG_WINDOW)[0]
    lo = grid[max(keep[0] - 1, 0)]
    hi = grid[min(keep[-1] + 1, grid.size - 1)]
    fine = np.linspace(lo, hi, N_FINE)
    lw = _log_integrand(fine, values, mult, K, N) + math.log(fine[1] - fine[0])
    mean, second = _moments(fine, values, mult, K)
    k_occ = mult.sum()
    if lo == grid[0]:
        # Below the first node the integrand grows like beta^k_occ.
        lw = np.append(lw, _log_integrand(fine[:1], values, mult, K, N) - math.log(k_occ))
        mean = np.append(mean, mean[0])
        second = np.append(second, second[0])
    if hi == grid[-1]:
        # Beyond the last node the integrand decays like 1/beta and the
        # conditional posterior is the uniform distribution: H = log K exactly.
        tail = _log_integrand(fine[-1:], values, mult, K, N)
        lw = np.append(lw, tail)
        mean = np.append(mean, math.log(K))
        second = np.append(second, math.log(K) ** 2)
    m, var, _ = posterior_average(lw, mean, second)
    return EntropyEstimate(m / LN2, math.sqrt(var) / LN2, Estimator.NSB, N, K)
