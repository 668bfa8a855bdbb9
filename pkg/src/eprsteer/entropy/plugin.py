"""Plug-in (maximum likelihood frequency) entropy."""
import numpy as np

from .base import EntropyEstimate, Estimator, as_counts, require_samples

N_BOOTSTRAP = 200


def plugin_value(counts):
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log2(p))) + 0.0  # no negative zero


def plugin_entropy(hist, n_bootstrap=N_BOOTSTRAP, seed=0):
    """Entropy of relative frequencies, with a multinomial bootstrap spread."""
    counts = as_counts(hist)
    n = require_samples(counts)
    value = plugin_value(counts)
    std = 0.0
    if n_bootstrap > 1:
        rng = np.random.default_rng(seed)
        occupied = counts[counts > 0]
        draws = rng.multinomial(n, occupied / n, size=n_bootstrap)
        p = draws / n
        with np.errstate(divide="ignore", invalid="ignore"):
            h = -np.sum(np.where(p > 0, p * np.log2(p), 0.0), axis=1)
        std = float(np.std(h, ddof=1))
    return EntropyEstimate(value, std, Estimator.PLUGIN, n, counts.size)
