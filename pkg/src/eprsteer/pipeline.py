"""Herald, bin, estimate and certify: the analysis chain behind ``analyze``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .entropy import Estimator, conditional_entropy
from .errors import EprSteerError, InputError
from .model import Basis
from .sim import PairSet, bin_events, circular_mask, default_grids, herald_postselect
from .witnesses import eof_cap, entropic_witness, reid_witness_binned


@dataclass
class AnalysisResult:
    reports: dict
    failures: dict
    pi_variance: tuple | None
    entropies: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "reports": {k: r.to_dict() for k, r in self.reports.items()},
            "failures": self.failures,
            "pi_variance": None if self.pi_variance is None else
            {"value": self.pi_variance[0], "std": self.pi_variance[1]},
            "conditional_entropies_bits": self.entropies,
            "counts": self.counts,
        }


def events_to_histograms(events_x, events_k, state, calibration, n_cells=100,
                         herald=True, window_multiple=2.0, circular=False):
    """Herald (optional) and coarse-grain events of both bases.

    With ``circular`` the events are first restricted to the disk inscribed
    in the square grid.
    """
    if events_x.basis is not Basis.POSITION or events_k.basis is not Basis.MOMENTUM:
        raise InputError("need one position and one momentum event set")
    grid_x, grid_k = default_grids(calibration, n_cells)
    hists = []
    for ev, grid in ((events_x, grid_x), (events_k, grid_k)):
        if circular:
            ev = circular_mask(ev, 0.5 * grid.n * grid.delta)
        if herald:
            pairs = herald_postselect(ev, state, window_multiple)
        else:
            pairs = PairSet(ev.basis, ev.a[:, 0], ev.b[:, 0], ev.correlated)
        hists.append(bin_events(pairs, grid))
    return hists[0], hists[1]


def analyze_histograms(hist_x, hist_k, calibration, estimators=None, K=None,
                       n_bootstrap=200, seed=0, ml_background="product"):
    """One WitnessReport per estimator; failures are recorded, not raised."""
    if hist_x.basis is not Basis.POSITION or hist_k.basis is not Basis.MOMENTUM:
        raise InputError("need one position and one momentum histogram")
    estimators = [Estimator.parse(e) for e in (estimators or list(Estimator))]
    try:
        pi = reid_witness_binned(hist_x, hist_k, n_bootstrap=n_bootstrap, seed=seed)
    except EprSteerError:
        pi = None
    cap = eof_cap(K) if K is not None else None
    reports, failures, entropies = {}, {}, {}
    for est in estimators:
        try:
            opts = {"background": ml_background} if est is Estimator.ML else {}
            hx = conditional_entropy(hist_x, est, seed=seed, **opts)
            hk = conditional_entropy(hist_k, est, seed=seed + 2, **opts)
            if not (np.isfinite(hx.value) and np.isfinite(hk.value)):
                raise InputError("non-finite entropy estimate")
            reports[est.value] = entropic_witness(hx, hk, calibration, eof_cap=cap,
                                                  pi_variance=pi, estimator=est.value)
            entropies[est.value] = {"position": hx.to_dict(), "momentum": hk.to_dict()}
        except EprSteerError as exc:
            failures[est.value] = {"category": exc.category, "message": str(exc)}
    counts = {h.basis.value: {"binned": h.total, "out_of_range": h.out_of_range}
              for h in (hist_x, hist_k)}
    return AnalysisResult(reports, failures, pi, entropies, counts)


def summary_text(result, header=""):
    """Human-readable digest of an AnalysisResult."""
    lines = [header] if header else []
    lines.append(f"{'estimator':<10}{'Sigma_H':>10}{'bound':>9}{'dI':>9}{'+-':>7}"
                 f"{'E_lower':>9}  steering  3sigma")
    for name, r in result.reports.items():
        lines.append(f"{name:<10}{r.sigma_H:>10.3f}{r.bound_steering:>9.3f}{r.delta_I:>9.3f}"
                     f"{r.delta_I_std:>7.3f}{r.eof_lower:>9.3f}  {str(r.steering_certified):<8}  "
                     f"{r.steering_sigma.get('3sigma', False)}")
    for name, f in result.failures.items():
        lines.append(f"{name:<10}failed ({f['category']}): {f['message']}")
    if result.pi_variance is not None:
        v, s = result.pi_variance
        lines.append(f"variance product Pi = {v:.4g} +- {s:.2g} (steering if < 0.25: {v < 0.25})")
    return "\n".join(lines) + "\n"
