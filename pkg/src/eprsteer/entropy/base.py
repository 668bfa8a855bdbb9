from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError

LN2 = math.log(2.0)


class Estimator(str, enum.Enum):
    PLUGIN = "plugin"
    NSB = "nsb"
    PYM = "pym"
    ML = "ml"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown estimator {value!r}") from None


@dataclass(frozen=True)
class EntropyEstimate:
    value: float  # bits
    std_uncertainty: float  # bits
    estimator: Estimator
    n_total: int
    n_bins: int

    def __sub__(self, other):
        """Difference with uncertainties added in quadrature (covariance ignored)."""
        return EntropyEstimate(
            self.value - other.value,
            math.hypot(self.std_uncertainty, other.std_uncertainty),
            self.estimator, self.n_total, self.n_bins)

    def to_dict(self):
        return {"value_bits": self.value, "std_bits": self.std_uncertainty,
                "estimator": self.estimator.value, "n_total": self.n_total,
                "n_bins": self.n_bins}


def as_counts(hist):
    """Flat integer count vector from a histogram object or array."""
    counts = getattr(hist, "counts", hist)
    counts = np.asarray(counts)
    if counts.size and not np.all(np.equal(np.mod(counts, 1), 0)):
        raise DomainError("counts must be integers")
    counts = counts.astype(np.int64).ravel()
    if np.any(counts < 0):
        raise DomainError("counts must be non-negative")
    return counts


def count_profile(counts):
    """Distinct non-zero count values and how many bins hold each."""
    nz = counts[counts > 0]
    values, mult = np.unique(nz, return_counts=True)
    return values.astype(float), mult.astype(float)


def require_samples(counts):
    n = int(counts.sum())
    if n < 1:
        raise DomainError("entropy estimation needs at least one count")
    return n


def dirichlet_entropy_moments(a, mult):
    """First two moments (nats) of ``-sum p log p`` for ``p ~ Dir(a)``.

    ``a`` has shape ``(n_nodes, n_groups)``; group ``g`` stands for
    ``mult[g]`` components sharing the parameter ``a[:, g]``.
    """
    from scipy.special import digamma, polygamma

    a = np.asarray(a, dtype=float)
    mult = np.broadcast_to(np.asarray(mult, dtype=float), a.shape)
    A = np.sum(mult * a, axis=1)
    mean = digamma(A + 1.0) - np.sum(mult * a * digamma(a + 1.0), axis=1) / A
    psiA2 = digamma(A + 2.0)[:, None]
    trA2 = polygamma(1, A + 2.0)
    x = digamma(a + 1.0) - psiA2
    s1 = np.sum(mult * a * x, axis=1)
    s2 = np.sum(mult * a * a * x * x, axis=1)
    sa2 = np.sum(mult * a * a, axis=1)
    cross = s1 * s1 - s2 - trA2 * (A * A - sa2)
    diag = np.sum(mult * a * (a + 1.0) * ((digamma(a + 2.0) - psiA2) ** 2
                                          + polygamma(1, a + 2.0) - trA2[:, None]), axis=1)
    second = (cross + diag) / (A * (A + 1.0))
    return mean, second


def posterior_average(log_weight, mean, second):
    """Normalize quadrature log-weights and combine conditional moments."""
    lw = log_weight - np.max(log_weight)
    w = np.exp(lw)
    w /= w.sum()
    m = float(np.sum(w * mean))
    var = float(np.sum(w * second)) - m * m
    return m, max(var, 0.0), w


_STIRLING_SWITCH = 1e5


def _stirling_corr(z):
    zi = 1.0 / z
    zi2 = zi * zi
    return zi * (1.0 / 12.0 - zi2 * (1.0 / 360.0 - zi2 / 1260.0))


def log_rising(x, n):
    """``log Gamma(x + n) - log Gamma(x)`` without cancellation at large ``x``."""
    from scipy.special import gammaln

    x, n = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(n, dtype=float))
    out = np.empty(x.shape)
    big = x > _STIRLING_SWITCH
    sm = ~big
    out[sm] = gammaln(x[sm] + n[sm]) - gammaln(x[sm])
    xb, nb = x[big], n[big]
    out[big] = ((xb - 0.5) * np.log1p(nb / xb) + nb * np.log(xb + nb) - nb
                + _stirling_corr(xb + nb) - _stirling_corr(xb))
    return out


def trigamma_gap(K, beta):
    """``K psi1(K beta + 1) - psi1(beta + 1)``, stable for large ``beta``."""
    from scipy.special import polygamma

    beta = np.asarray(beta, dtype=float)
    out = np.empty(beta.shape)
    big = beta > _STIRLING_SWITCH
    b = beta[~big]
    out[~big] = K * polygamma(1, K * b + 1.0) - polygamma(1, b + 1.0)
    b = beta[big]
    # psi1(z + 1) = 1/z - 1/(2 z^2) + 1/(6 z^3) - 1/(30 z^5)
    out[big] = ((1.0 - 1.0 / K) / (2.0 * b * b) - (1.0 - 1.0 / K ** 2) / (6.0 * b ** 3)
                + (1.0 - 1.0 / K ** 4) / (30.0 * b ** 5))
    return out
