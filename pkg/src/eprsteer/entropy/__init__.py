"""Shannon entropy estimators for undersampled histograms (all values in bits)."""
from .base import EntropyEstimate, Estimator
from .conditional import conditional_entropy, estimate
from .ml import (GaussianShape, PoissonFit, fit_poisson_mixture, fit_shape,
                 ml_conditional_entropy, ml_entropy, templates)
from .nsb import nsb_entropy
from .plugin import plugin_entropy, plugin_value
from .pym import py_prior_entropy_moments, pym_entropy

__all__ = [
    "EntropyEstimate", "Estimator", "GaussianShape", "PoissonFit",
    "conditional_entropy", "estimate", "fit_poisson_mixture", "fit_shape",
    "ml_conditional_entropy", "ml_entropy", "nsb_entropy", "plugin_entropy",
    "plugin_value", "py_prior_entropy_moments", "pym_entropy", "templates",
]
