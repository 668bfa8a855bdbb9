from __future__ import annotations

from .base import Estimator
from .ml import ml_conditional_entropy
from .nsb import nsb_entropy
from .plugin import plugin_entropy
from .pym import pym_entropy


def estimate(counts, estimator, n_bins=None, seed=0):
    """Apply a non-parametric estimator to a flat count vector."""
    estimator = Estimator.parse(estimator)
    if estimator is Estimator.PLUGIN:
        return plugin_entropy(counts, seed=seed)
    if estimator is Estimator.NSB:
        return nsb_entropy(counts, n_bins=n_bins)
    if estimator is Estimator.PYM:
        return pym_entropy(counts)
    raise ValueError("the ML estimator needs grid metadata; use ml_conditional_entropy")


def conditional_entropy(joint, estimator, seed=0, **ml_options):
    """``H(b|a) = H(a, b) - H(a)`` for a JointHistogram.

    For the non-parametric estimators the joint and arm-A marginal estimates
    are independent calls and their uncertainties are combined in quadrature
    (their covariance is ignored, which overstates the spread). The ML route
    differentiates the conditional entropy of the fitted rate directly.
    """
    estimator = Estimator.parse(estimator)
    if estimator is Estimator.ML:
        return ml_conditional_entropy(joint, **ml_options)
    counts = joint.counts
    h_joint = estimate(counts.ravel(), estimator, n_bins=counts.size, seed=seed)
    h_marg = estimate(counts.sum(axis=1), estimator, n_bins=counts.shape[0], seed=seed + 1)
    return h_joint - h_marg
