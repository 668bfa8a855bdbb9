import math

import numpy as np
import pytest

from eprsteer.entropy import (GaussianShape, conditional_entropy, fit_poisson_mixture, fit_shape,
                              ml_conditional_entropy, ml_entropy, plugin_entropy, pym_entropy,
                              templates)
from eprsteer.errors import DomainError
from eprsteer.model import Basis, BiphotonState, pair_widths
from eprsteer.sim import JointHistogram, PairSet, bin_events, calibration_cells, default_grids, sample_pairs

from conftest import KAPPA_EXP, SIGMA_EXP

CAL = calibration_cells(31, 8, 800, 50)
GRIDS = dict(zip(Basis, default_grids(CAL)))


def hist_from_state(q, n, basis, seed):
    s = BiphotonState(SIGMA_EXP, KAPPA_EXP, q)
    ev = sample_pairs(s, n, basis, seed)
    return bin_events(PairSet(basis, ev.a[:, 0], ev.b[:, 0]), GRIDS[basis])


def true_shape(basis):
    sd, ss = pair_widths(BiphotonState(SIGMA_EXP, KAPPA_EXP), basis)
    return GaussianShape(sd, ss)


@pytest.mark.parametrize("basis", list(Basis))
def test_fit_shape_recovers_widths(basis):
    h = hist_from_state(0.7, 200000, basis, seed=1)
    shape = fit_shape(h)
    ref = true_shape(basis)
    narrow, wide = sorted((shape.s_diff, shape.s_sum))
    r_narrow, r_wide = sorted((ref.s_diff, ref.s_sum))
    assert narrow == pytest.approx(r_narrow, rel=0.03)
    assert wide == pytest.approx(r_wide, rel=0.03)
    assert abs(shape.center_a) < 0.1 * GRIDS[basis].delta


def test_poisson_self_consistency():
    """Counts drawn from lambda = alpha S + beta B: 95% of fits within 3 s.e."""
    g = GRIDS[Basis.POSITION]
    h0 = JointHistogram(np.zeros((g.n, g.n)), g, g, Basis.POSITION)
    s, b = templates(h0, true_shape(Basis.POSITION))
    alpha, beta = 1800.0, 1200.0
    lam = alpha * s + beta * b
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(100):
        n = rng.poisson(lam)
        fit = fit_poisson_mixture(n, s, b)
        se = fit.standard_errors
        hits += abs(fit.alpha - alpha) < 3 * se[0] and abs(fit.beta - beta) < 3 * se[1]
        assert fit.gradient_norm < 1e-6 * n.sum()
        assert fit.alpha >= 0 and fit.beta >= 0
    assert hits >= 95


def test_poisson_fit_boundary():
    g = GRIDS[Basis.POSITION]
    h0 = JointHistogram(np.zeros((g.n, g.n)), g, g, Basis.POSITION)
    s, b = templates(h0, true_shape(Basis.POSITION))
    # pure background data: the correlated amplitude is pinned at zero, never negative
    n = np.random.default_rng(3).poisson(3000 * b)
    fit = fit_poisson_mixture(n, s, b)
    assert fit.alpha >= 0.0 and fit.beta > 0
    with pytest.raises(DomainError):
        fit_poisson_mixture(np.zeros_like(s), s, b)


def test_fisher_matches_empirical_spread():
    g = GRIDS[Basis.MOMENTUM]
    h0 = JointHistogram(np.zeros((g.n, g.n)), g, g, Basis.MOMENTUM)
    s, b = templates(h0, true_shape(Basis.MOMENTUM))
    rng = np.random.default_rng(1)
    fits = [fit_poisson_mixture(rng.poisson(1500 * s + 1500 * b), s, b) for _ in range(300)]
    emp = np.std([f.alpha for f in fits], ddof=1)
    pred = np.mean([f.standard_errors[0] for f in fits])
    assert emp == pytest.approx(pred, rel=0.15)


@pytest.mark.parametrize("basis", list(Basis))
def test_ml_matches_plugin_noiseless(basis):
    h = hist_from_state(1.0, 10 ** 6, basis, seed=2)
    ml = ml_entropy(h)
    pl = plugin_entropy(h, n_bootstrap=0)
    assert ml.value == pytest.approx(pl.value, abs=0.02)
    assert ml_conditional_entropy(h).value == pytest.approx(
        conditional_entropy(h, "plugin").value, abs=0.02)


def test_ml_requires_grid():
    with pytest.raises(DomainError):
        ml_entropy(np.array([1, 2, 3]))


def test_flat_background_option():
    h = hist_from_state(0.8, 3000, Basis.POSITION, seed=4)
    flat = ml_conditional_entropy(h, background="flat")
    prod = ml_conditional_entropy(h, background="product")
    assert np.isfinite(flat.value) and np.isfinite(prod.value)
    with pytest.raises(DomainError):
        ml_conditional_entropy(h, background="gaussian")


PYM_BIASED = pytest.mark.xfail(strict=True, reason="PYM overestimates Sigma_H at low q; see ledger")


@pytest.mark.slow
@pytest.mark.parametrize("q", [pytest.param(0.2, marks=PYM_BIASED), pytest.param(0.5, marks=PYM_BIASED),
                               0.8, 1.0])
def test_ml_pym_consistent_undersampled(q):
    diffs, combined = [], []
    for seed in range(10):
        tot = {"ml": [0.0, 0.0], "pym": [0.0, 0.0]}
        for basis in Basis:
            h = hist_from_state(q, 3000, basis, seed=seed)
            for name in tot:
                e = conditional_entropy(h, name)
                tot[name][0] += e.value
                tot[name][1] = math.hypot(tot[name][1], e.std_uncertainty)
        diffs.append(tot["ml"][0] - tot["pym"][0])
        combined.append(math.hypot(tot["ml"][1], tot["pym"][1]))
    assert abs(np.mean(diffs)) < np.mean(combined)
