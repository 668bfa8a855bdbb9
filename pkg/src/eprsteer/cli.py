"""``eprsteer`` command-line front end.

Errors end the process with a category-specific exit code and one JSON line
on stderr: ``{"error": "<category>", "message": "..."}``.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig
from .errors import ConfigError, EprSteerError, InputError
from .model import Basis, schmidt_number, witness_map
from .pipeline import analyze_histograms, events_to_histograms, summary_text
from .sim import EventSet, sample_pairs

EXIT_CODES = {"usage": 2, "config": 3, "input": 4, "format": 5, "domain": 6,
              "accuracy": 7, "fit": 8, "io": 9, "error": 1}
BASES = (Basis.POSITION, Basis.MOMENTUM)


def _basis_seeds(seed):
    return dict(zip(BASES, np.random.SeedSequence(seed).spawn(2)))


def _load_config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _meta(cfg):
    return {"digest": cfg.digest, "seed": cfg.seed}


# ---------------------------------------------------------------- simulate

def cmd_simulate(cfg, out):
    state = cfg.state.build()
    outputs = []
    for basis, ss in _basis_seeds(cfg.seed).items():
        ev = sample_pairs(state, cfg.n_pairs, basis, ss)
        path = out / f"events_{basis.value}.tsv"
        io.write_events(path, ev, **_meta(cfg))
        outputs.append(path)
    io.write_manifest(out / "manifest.json", "simulate", cfg, outputs)
    return outputs


# ---------------------------------------------------------------- analyze

def _collect_inputs(args):
    ev = {Basis.POSITION: args.events_position, Basis.MOMENTUM: args.events_momentum}
    hi = {Basis.POSITION: args.histogram_position, Basis.MOMENTUM: args.histogram_momentum}
    if args.input:
        root = Path(args.input)
        for b in BASES:
            if ev[b] is None and hi[b] is None:
                e, h = root / f"events_{b.value}.tsv", root / f"histogram_{b.value}.json"
                if e.exists():
                    ev[b] = e
                elif h.exists():
                    hi[b] = h
    for b in BASES:
        if ev[b] is None and hi[b] is None:
            raise InputError(f"no {b.value} event or histogram input given")
        if ev[b] is not None and hi[b] is not None:
            raise InputError(f"give either events or a histogram for {b.value}, not both")
    return ev, hi


def cmd_analyze(cfg, out, ev_paths, hist_paths):
    state, cal = cfg.state.build(), cfg.cells
    hists, inputs = {}, []
    events = {}
    for b in BASES:
        if ev_paths[b] is not None:
            e, _ = io.read_events(ev_paths[b])
            if e.basis is not b:
                raise InputError(f"{ev_paths[b]} holds {e.basis.value} events, expected {b.value}")
            events[b] = e
            inputs.append(ev_paths[b])
        else:
            h, meta = io.read_histogram(hist_paths[b])
            if h.basis is not b:
                raise InputError(f"{hist_paths[b]} holds a {h.basis.value} histogram, expected {b.value}")
            hists[b] = h
            inputs.append(hist_paths[b])
    if events:
        empty = {b: EventSet(b, np.empty((0, 2)), np.empty((0, 2))) for b in BASES}
        hx, hk = events_to_histograms(events.get(Basis.POSITION, empty[Basis.POSITION]),
                                      events.get(Basis.MOMENTUM, empty[Basis.MOMENTUM]),
                                      state, cal, cfg.calibration.n_cells,
                                      cfg.herald.enabled, cfg.herald.window_multiple,
                                      cfg.herald.circular_mask)
        for b, h in ((Basis.POSITION, hx), (Basis.MOMENTUM, hk)):
            if b in events:
                hists[b] = h
    outputs = []
    herald = {"heralded": cfg.herald.enabled, "window_multiple": cfg.herald.window_multiple,
              "circular_mask": cfg.herald.circular_mask}
    for b in BASES:
        if b in events:
            path = out / f"histogram_{b.value}.json"
            io.write_histogram(path, hists[b], {**herald, "config_digest": cfg.digest, "seed": cfg.seed})
            outputs.append(path)
    K = schmidt_number(cfg.state.sigma_um, cfg.state.kappa_per_mm)
    result = analyze_histograms(hists[Basis.POSITION], hists[Basis.MOMENTUM], cal,
                                cfg.estimators, K=K, n_bootstrap=cfg.n_bootstrap,
                                seed=cfg.seed, ml_background=cfg.ml_background)
    report = {"format": io.REPORT_TAG, "config_digest": cfg.digest, "seed": cfg.seed,
              "cell_dx_um": cal.dx, "cell_dk_per_mm": cal.dk, "schmidt_number_model": K,
              **result.to_dict()}
    io.write_json(out / "report.json", report)
    header = f"eprsteer analysis (config {cfg.digest}, seed {cfg.seed})"
    (out / "summary.txt").write_text(summary_text(result, header), encoding="utf-8")
    outputs += [out / "report.json", out / "summary.txt"]
    io.write_manifest(out / "manifest.json", "analyze", cfg, outputs, inputs=inputs)
    return result


# ---------------------------------------------------------------- witness map

def cmd_witness_map(cfg, out):
    m = cfg.witness_map
    wm = witness_map((m.K_min, m.K_max), (m.q_min, m.q_max), (m.n_K, m.n_q), m.n_nodes)
    common = {"config_digest": cfg.digest, "seed": cfg.seed, "K": wm.K, "q": wm.q,
              "layout": "values[i][j] at q[i], K[j]"}
    paths = [out / "witness_map_entropic.json", out / "witness_map_variance.json"]
    io.write_json(paths[0], {**common, "quantity": "Sigma_h_bits", "values": wm.entropy_sum,
                             "levels": {"steering_bits": wm.levels["steering_entropy"],
                                        "eof_bits": wm.levels["eof_entropy"]}})
    io.write_json(paths[1], {**common, "quantity": "Pi_dimensionless", "values": wm.variance_product,
                             "levels": {"steering": wm.levels["steering_variance"]}})
    io.write_manifest(out / "manifest.json", "witness-map", cfg, paths)
    return paths


# ---------------------------------------------------------------- frames

def _camera(cfg):
    from .frames import CameraModel

    f = cfg.frames
    return CameraModel(f.pixel_pitch_um, f.offset_adu, f.offset_variation_adu, f.noise_sd_adu,
                       f.fwhm_px, f.mean_amplitude_adu)


def _pixel_cal(cfg, basis):
    from .frames import PixelCalibration

    cal = cfg.cells
    return PixelCalibration(basis, cal.dx if basis is Basis.POSITION else cal.dk)


def _geometry(cfg):
    from .frames import frame_geometry

    f = cfg.frames
    return frame_geometry(cfg.calibration.n_cells, f.margin_px, f.width_px, f.height_px)


def cmd_frames_synth(cfg, out):
    from .frames import sample_frame_truth, synthesize_frame

    state, model, geo = cfg.state.build(), _camera(cfg), _geometry(cfg)
    outputs, dropped = [], {}
    for code, (basis, ss) in enumerate(_basis_seeds(cfg.seed).items()):
        s_truth, s_img = ss.spawn(2)
        truth = sample_frame_truth(state, basis, cfg.frames.n_frames, cfg.frames.mean_photons_per_arm,
                                   _pixel_cal(cfg, basis), geo, s_truth)
        img_seed = int(s_img.generate_state(1)[0])
        fpath = out / f"frames_{basis.value}.bin"
        with io.FrameWriter(fpath, geo.width, geo.height, basis, cfg.seed, cfg.digest) as w:
            for i, pts in enumerate(truth.positions):
                w.write(synthesize_frame(pts, model, geo.shape, img_seed, index=i,
                                         noise=cfg.frames.noise).pixels)
        tpath = out / f"truth_{basis.value}.tsv"
        lines = [f"# eprsteer-frame-truth v1", f"# basis: {basis.value}", "# units: px",
                 f"# n_frames: {cfg.frames.n_frames}", f"# config_digest: {cfg.digest}",
                 f"# seed: {cfg.seed}", "frame\tarm\tx_px\ty_px"]
        for i, (pts, arms) in enumerate(zip(truth.positions, truth.arms)):
            lines += [f"{i}\t{'AB'[a]}\t{x!r}\t{y!r}" for (x, y), a in zip(pts.tolist(), arms.tolist())]
        tpath.write_text("\n".join(lines) + "\n", encoding="utf-8")
        outputs += [fpath, tpath]
        dropped[basis.value] = truth.dropped
    io.write_manifest(out / "manifest.json", "frames synth", cfg, outputs,
                      extra={"photons_off_sensor": dropped})
    return outputs


def _detect_chunk(job):
    path, lo, hi, model, kw = job
    from .frames import detect_spots

    _, data = io.read_frames(path)
    return [detect_spots(data[i], model, **kw) for i in range(lo, hi)]


def detect_file(path, model, threshold_multiple=5.0, fit_radius=3.0, workers=1, chunk=512):
    """Detections per frame, in frame order; independent of ``workers``."""
    hdr = io.read_frame_header(path)
    kw = {"threshold_multiple": threshold_multiple, "fit_radius": fit_radius}
    jobs = [(str(path), lo, min(lo + chunk, hdr["count"]), model, kw)
            for lo in range(0, hdr["count"], chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_detect_chunk, jobs))
    else:
        parts = [_detect_chunk(j) for j in jobs]
    return hdr, [d for p in parts for d in p]


def cmd_frames_detect(cfg, out, inputs, workers=1):
    from .frames import frames_to_events

    model, geo = _camera(cfg), _geometry(cfg)
    outputs, tallies, frame_files = [], {}, {}
    for b in BASES:
        p = inputs.get(b)
        if p is None:
            raise InputError(f"no {b.value} frame file given")
        frame_files[b] = p
    for b, path in frame_files.items():
        hdr, dets = detect_file(path, model, cfg.frames.threshold_multiple,
                                cfg.frames.fit_radius_px, workers)
        if hdr["basis"] is not b:
            raise InputError(f"{path} holds {hdr['basis'].value} frames, expected {b.value}")
        if (hdr["width"], hdr["height"]) != (geo.width, geo.height):
            raise InputError(f"{path}: frames are {hdr['width']}x{hdr['height']} px, "
                             f"config expects {geo.width}x{geo.height}")
        dpath = out / f"detections_{b.value}.tsv"
        io.write_detections(dpath, dets, hdr["count"], cfg.digest, cfg.seed, b.value)
        tally = frames_to_events(dets, geo.region_a, geo.region_b, _pixel_cal(cfg, b))
        epath = out / f"events_{b.value}.tsv"
        io.write_events(epath, tally.events, **_meta(cfg))
        outputs += [dpath, epath]
        tallies[b.value] = dict(sorted(tally.reasons.items()))
    io.write_manifest(out / "manifest.json", "frames detect", cfg, outputs,
                      inputs=list(frame_files.values()), extra={"frame_tallies": tallies})
    return tallies


# ---------------------------------------------------------------- report

def cmd_report(path, fmt="text"):
    data = io.read_json(path)
    if data.get("format") != io.REPORT_TAG:
        raise InputError(f"{path} is not an analysis report")
    if fmt == "json":
        return json.dumps(data, indent=2, sort_keys=True) + "\n"
    lines = [f"report {path} (config {data['config_digest']}, seed {data['seed']})",
             f"cells: dx = {data['cell_dx_um']:.4g} um, dk = {data['cell_dk_per_mm']:.4g} mm^-1"]
    for name, r in data["reports"].items():
        verdict = "certified" if r["steering_certified"] else "not certified"
        n_sig = max([int(k[0]) for k, v in r["steering_sigma"].items() if v], default=0)
        lines.append(f"  {name:<7} Sigma_H = {r['sigma_H']:.3f} +- {r['sigma_H_std']:.3f} bits; "
                     f"dI = {r['delta_I']:.3f} +- {r['delta_I_std']:.3f} ({verdict}, >= {n_sig} sigma); "
                     f"E_lower = {r['eof_lower']:.3f} ebits")
    for name, f in data["failures"].items():
        lines.append(f"  {name:<7} failed [{f['category']}] {f['message']}")
    pi = data.get("pi_variance")
    if pi:
        lines.append(f"  Pi = {pi['value']:.4g} +- {pi['std']:.2g} "
                     f"({'below' if pi['value'] < 0.25 else 'not below'} 1/4)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", message)


def _fail(category, message):
    sys.stderr.write(json.dumps({"error": category, "message": message}) + "\n")
    raise SystemExit(EXIT_CODES.get(category, 1))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", default=".", help="output directory (default: .)")

    p = _Parser(prog="eprsteer", description="Simulate, estimate and certify EPR-steering "
                "from coincidence data of a noisy biphoton source.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="sample coincidence events in both bases")
    a = sub.add_parser("analyze", parents=[common], help="herald, bin, estimate and certify")
    a.add_argument("--input", help="directory holding events_*.tsv or histogram_*.json")
    for b in BASES:
        a.add_argument(f"--events-{b.value}", type=Path, help=f"{b.value} event file")
        a.add_argument(f"--histogram-{b.value}", type=Path, help=f"{b.value} histogram file")
    a.add_argument("--estimators", help="comma-separated subset of plugin,nsb,pym,ml")
    sub.add_parser("witness-map", parents=[common], help="entropic and variance witness grids")
    fr = sub.add_parser("frames", help="raw camera frame pipeline")
    fsub = fr.add_subparsers(dest="frames_command", required=True, parser_class=_Parser)
    fsub.add_parser("synth", parents=[common], help="render frames from sampled photons")
    d = fsub.add_parser("detect", parents=[common], help="localize photons and emit events")
    d.add_argument("--input", help="directory holding frames_*.bin")
    for b in BASES:
        d.add_argument(f"--frames-{b.value}", type=Path, help=f"{b.value} raw frame file")
    d.add_argument("--workers", type=int, default=1, help="detection processes (default: 1)")
    r = sub.add_parser("report", help="print a stored analysis report")
    r.add_argument("report", type=Path)
    r.add_argument("--format", choices=("text", "json"), default="text")
    return p


def run(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "report":
        sys.stdout.write(cmd_report(args.report, args.format))
        return 0
    cfg = _load_config(args)
    if getattr(args, "estimators", None):
        data = cfg.to_dict()
        data["estimators"] = [e.strip() for e in args.estimators.split(",") if e.strip()]
        cfg = RunConfig.from_dict(data)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create output directory {out}: {exc.strerror}") from None
    if args.command == "simulate":
        cmd_simulate(cfg, out)
    elif args.command == "analyze":
        ev, hi = _collect_inputs(args)
        result = cmd_analyze(cfg, out, ev, hi)
        sys.stdout.write(summary_text(result))
    elif args.command == "witness-map":
        cmd_witness_map(cfg, out)
    elif args.frames_command == "synth":
        cmd_frames_synth(cfg, out)
    else:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        inputs = {b: getattr(args, f"frames_{b.value}") for b in BASES}
        if args.input:
            for b in BASES:
                inputs[b] = inputs[b] or Path(args.input) / f"frames_{b.value}.bin"
        tallies = cmd_frames_detect(cfg, out, inputs, args.workers)
        sys.stdout.write(json.dumps(tallies, sort_keys=True) + "\n")
    return 0


def main(argv=None):
    try:
        return run(argv)
    except EprSteerError as exc:
        _fail(exc.category, str(exc))
    except OSError as exc:
        _fail("io", str(exc))
    except OSError as exc:
        _fail("io", f"{exc.strerror or exc}" + (f": {exc.filename}" if exc.filename else ""))


if __name__ == "__main__":
    sys.exit(main())
