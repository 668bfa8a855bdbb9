import json
import math

import numpy as np
import pytest

from eprsteer import io
from eprsteer.cli import EXIT_CODES, main
from eprsteer.config import RunConfig
from eprsteer.errors import ConfigError, FormatError, InputError
from eprsteer.model import LOG2_PI_E, Basis, BiphotonState
from eprsteer.sim import GridSpec, JointHistogram, sample_pairs
from eprsteer.witnesses import LOG2_E_OVER_2

# small frame runs: 40-cell regions, 80 um detector bins
FRAME_CFG = {"calibration": {"delta_b_um": 80.0, "n_cells": 40},
             "frames": {"n_frames": 10000, "margin_px": 4}}


def write_cfg(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def run_cli(argv, capsys):
    """Exit code, stdout and the parsed stderr JSON line (or None)."""
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    err_line = json.loads(err.strip().splitlines()[-1]) if err.strip() else None
    return code, out, err_line


# ------------------------------------------------------------------ formats

def test_events_round_trip(tmp_path):
    ev = sample_pairs(BiphotonState(6.25, 7.75, 0.5), 500, Basis.MOMENTUM, 1)
    io.write_events(tmp_path / "e.tsv", ev, digest="abc", seed=1)
    back, meta = io.read_events(tmp_path / "e.tsv")
    assert back.basis is Basis.MOMENTUM
    np.testing.assert_array_equal(back.a, ev.a)
    np.testing.assert_array_equal(back.b, ev.b)
    np.testing.assert_array_equal(back.correlated, ev.correlated)
    assert meta["config_digest"] == "abc" and meta["units"] == "1/mm"
    assert "a_x_1/mm" in (tmp_path / "e.tsv").read_text()


def test_events_format_errors(tmp_path):
    p = tmp_path / "e.tsv"
    ev = sample_pairs(BiphotonState(6.25, 7.75, 0.5), 3, Basis.POSITION, 1)
    io.write_events(p, ev)
    text = p.read_text()
    lines = text.splitlines()
    lines[-1] = "1.0\tnot-a-number\t2\t3\t1"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError) as exc:
        io.read_events(p)
    assert exc.value.offset == len("\n".join(lines[:-1]).encode()) + 1
    p.write_text("garbage\n")
    with pytest.raises(FormatError):
        io.read_events(p)


def test_histogram_round_trip(tmp_path):
    g = GridSpec.centered(3.875, 10)
    counts = np.random.default_rng(0).poisson(2.0, (10, 10))
    h = JointHistogram(counts, g, g, Basis.POSITION, out_of_range=3)
    io.write_histogram(tmp_path / "h.json", h)
    back, _ = io.read_histogram(tmp_path / "h.json")
    np.testing.assert_array_equal(back.counts, h.counts)
    assert back.grid_a == g and back.out_of_range == 3
    data = json.loads((tmp_path / "h.json").read_text())
    assert "delta_um" in data["grid_a"]
    data["total"] += 1
    (tmp_path / "h.json").write_text(json.dumps(data))
    with pytest.raises(FormatError):
        io.read_histogram(tmp_path / "h.json")


def _frame_file(path, n=3, w=8, h=6):
    with io.FrameWriter(path, w, h, Basis.POSITION, seed=5, digest="d" * 16) as fw:
        for i in range(n):
            fw.write(np.full((h, w), 100 + i, dtype=np.uint16))
    return path


def test_frames_round_trip(tmp_path):
    p = _frame_file(tmp_path / "f.bin")
    hdr, data = io.read_frames(p)
    assert (hdr["width"], hdr["height"], hdr["count"]) == (8, 6, 3)
    assert hdr["seed"] == 5 and hdr["config_digest"] == "d" * 16
    assert data.shape == (3, 6, 8) and int(data[2, 0, 0]) == 102
    assert p.stat().st_size == io.FRAME_HEADER.size + 3 * 6 * 8 * 2


def test_frame_header_errors(tmp_path):
    p = _frame_file(tmp_path / "f.bin")
    raw = bytearray(p.read_bytes())
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError) as exc:
        io.read_frame_header(bad)
    assert exc.value.offset == 0
    bad.write_bytes(raw[:20])
    with pytest.raises(FormatError, match="truncated") as exc:
        io.read_frame_header(bad)
    assert exc.value.offset == 20
    # header width no longer matches the payload size
    hacked = bytearray(raw)
    hacked[8:12] = (9).to_bytes(4, "little")
    bad.write_bytes(hacked)
    with pytest.raises(FormatError, match="byte offset") as exc:
        io.read_frame_header(bad)
    assert exc.value.offset == len(raw)
    bad.write_bytes(raw[:-7])
    with pytest.raises(FormatError):
        io.read_frame_header(bad)


def test_config_validation(tmp_path):
    cfg = RunConfig()
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    assert len(cfg.digest) == 16
    assert cfg.with_seed(3).digest != cfg.digest
    for bad in ({"state": {"sigma_um": -1}}, {"state": {"q": 1.5}}, {"bogus": 1},
                {"estimators": ["maxent"]}, {"calibration": {"n_cells": 1}}):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(bad)
    (tmp_path / "c.json").write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "c.json")


# ------------------------------------------------------------------ CLI

def test_exit_codes(tmp_path, capsys):
    code, _, err = run_cli(["simulate", "--config", str(tmp_path / "missing.json")], capsys)
    assert code == EXIT_CODES["config"] == 3 and err["error"] == "config"
    cfg = write_cfg(tmp_path / "c.json", {"state": {"q": 2.0}})
    code, _, err = run_cli(["simulate", "--config", cfg], capsys)
    assert code == 3 and "q" in err["message"]
    code, _, err = run_cli(["frobnicate"], capsys)
    assert code == 2 and err["error"] == "usage"
    code, _, err = run_cli(["analyze", "--out", str(tmp_path / "a")], capsys)
    assert code == 4 and err["error"] == "input"
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"nope")
    code, _, err = run_cli(["frames", "detect", "--frames-position", str(bad),
                            "--frames-momentum", str(bad), "--out", str(tmp_path / "d")], capsys)
    assert code == 5 and "offset" in err["message"]
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run_cli(["simulate", "--out", str(blocker / "sub")], capsys)
    assert code == 9 and err["error"] == "io"


def test_simulate_deterministic(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", {"n_pairs": 3000, "state": {"q": 0.5}})
    for d in ("r1", "r2"):
        assert run_cli(["simulate", "--config", cfg, "--out", str(tmp_path / d)], capsys)[0] == 0
    for name in ("events_position.tsv", "events_momentum.tsv", "manifest.json"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    ev, meta = io.read_events(tmp_path / "r1" / "events_position.tsv")
    assert len(ev) == 3000 and meta["seed"] == "0"
    man = json.loads((tmp_path / "r1" / "manifest.json").read_text())
    assert man["config"]["n_pairs"] == 3000
    assert man["outputs"]["events_position.tsv"] == io.sha256_file(tmp_path / "r1" / "events_position.tsv")
    run_cli(["simulate", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "r3")], capsys)
    assert (tmp_path / "r3" / "events_position.tsv").read_bytes() != \
        (tmp_path / "r1" / "events_position.tsv").read_bytes()


def test_simulate_empty(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", {"n_pairs": 0})
    assert run_cli(["simulate", "--config", cfg, "--out", str(tmp_path)], capsys)[0] == 0
    for b in Basis:
        ev, meta = io.read_events(tmp_path / f"events_{b.value}.tsv")
        assert len(ev) == 0 and meta["n_events"] == "0"


def _analyze(tmp_path, capsys, q, n):
    cfg = write_cfg(tmp_path / "c.json", {"n_pairs": n, "state": {"q": q}})
    run_cli(["simulate", "--config", cfg, "--out", str(tmp_path / "sim")], capsys)
    code, out, _ = run_cli(["analyze", "--config", cfg, "--input", str(tmp_path / "sim"),
                            "--out", str(tmp_path / "an")], capsys)
    assert code == 0 and "estimator" in out
    return cfg, json.loads((tmp_path / "an" / "report.json").read_text())


def test_analyze_q1_certifies_all(tmp_path, capsys):
    cfg, rep = _analyze(tmp_path, capsys, 1.0, 10 ** 5)
    assert rep["schmidt_number_model"] == pytest.approx(10.35, abs=0.01)
    assert set(rep["reports"]) == {"plugin", "nsb", "pym", "ml"} and not rep["failures"]
    for r in rep["reports"].values():
        assert r["steering_certified"] and r["delta_I"] > 0
        assert r["delta_I"] - r["eof_lower"] == pytest.approx(LOG2_E_OVER_2, abs=1e-12)
        assert r["eof_cap"] == pytest.approx(math.log2(10.35), abs=1e-3)
    assert rep["pi_variance"]["value"] < 0.25
    # histogram files written by analyze reproduce the same report
    hist_dir = tmp_path / "an"
    code, _, _ = run_cli(["analyze", "--config", cfg,
                          "--histogram-position", str(hist_dir / "histogram_position.json"),
                          "--histogram-momentum", str(hist_dir / "histogram_momentum.json"),
                          "--out", str(tmp_path / "an2")], capsys)
    assert code == 0
    assert (tmp_path / "an2" / "report.json").read_bytes() == (hist_dir / "report.json").read_bytes()
    code, out, _ = run_cli(["report", str(hist_dir / "report.json")], capsys)
    assert code == 0 and "certified" in out
    code, out, _ = run_cli(["report", str(hist_dir / "report.json"), "--format", "json"], capsys)
    assert json.loads(out)["config_digest"] == rep["config_digest"]


def test_analyze_q0_certifies_none(tmp_path, capsys):
    _, rep = _analyze(tmp_path, capsys, 0.0, 10 ** 5)
    assert rep["reports"]
    for name, r in rep["reports"].items():
        assert not r["steering_certified"], name
        assert r["delta_I"] - r["eof_lower"] == pytest.approx(LOG2_E_OVER_2, abs=1e-12)
    assert rep["pi_variance"]["value"] > 0.25


def test_analyze_estimator_subset_and_missing_basis(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", {"n_pairs": 2000})
    run_cli(["simulate", "--config", cfg, "--out", str(tmp_path / "sim")], capsys)
    code, _, _ = run_cli(["analyze", "--config", cfg, "--input", str(tmp_path / "sim"),
                          "--estimators", "plugin,ml", "--out", str(tmp_path / "an")], capsys)
    rep = json.loads((tmp_path / "an" / "report.json").read_text())
    assert code == 0 and set(rep["reports"]) | set(rep["failures"]) == {"plugin", "ml"}
    code, _, err = run_cli(["analyze", "--config", cfg, "--events-position",
                            str(tmp_path / "sim" / "events_position.tsv"),
                            "--out", str(tmp_path / "an3")], capsys)
    assert code == 4 and "momentum" in err["message"]
    code, _, err = run_cli(["analyze", "--config", cfg,
                            "--events-position", str(tmp_path / "sim" / "events_momentum.tsv"),
                            "--events-momentum", str(tmp_path / "sim" / "events_momentum.tsv"),
                            "--out", str(tmp_path / "an4")], capsys)
    assert code == 4


def test_witness_map_files(tmp_path, capsys):
    assert run_cli(["witness-map", "--out", str(tmp_path)], capsys)[0] == 0
    ent = json.loads((tmp_path / "witness_map_entropic.json").read_text())
    var = json.loads((tmp_path / "witness_map_variance.json").read_text())
    K, q = np.array(ent["K"]), np.array(ent["q"])
    E, V = np.array(ent["values"]), np.array(var["values"])
    assert E.shape == V.shape == (50, 50) and q[-1] == 1.0 and q[0] == 0.0
    np.testing.assert_allclose(E[-1], np.log2(math.pi * math.e / K), atol=1e-3)
    np.testing.assert_allclose(V[0], K ** 2, rtol=1e-9)
    # K = 1, q = 1 sits on the steering contour
    assert E[-1, 0] == pytest.approx(ent["levels"]["steering_bits"], abs=1e-3)
    assert ent["levels"]["steering_bits"] == pytest.approx(LOG2_PI_E)
    assert var["levels"]["steering"] == 0.25


@pytest.fixture(scope="module")
def frame_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("frames")
    cfg = write_cfg(root / "c.json", FRAME_CFG)
    assert main(["frames", "synth", "--config", cfg, "--out", str(root / "raw")]) == 0
    assert main(["frames", "detect", "--config", cfg, "--input", str(root / "raw"),
                 "--out", str(root / "det")]) == 0
    return root, cfg


def test_frames_end_to_end(frame_run, capsys):
    root, cfg = frame_run
    capsys.readouterr()
    man = json.loads((root / "det" / "manifest.json").read_text())
    for b in ("position", "momentum"):
        tally = man["frame_tallies"][b]
        assert sum(tally.values()) == 10000
        assert tally.get("coincidence", 0) > 40
    code, out, _ = run_cli(["analyze", "--config", cfg, "--input", str(root / "det"),
                            "--out", str(root / "an")], capsys)
    assert code == 0
    rep = json.loads((root / "an" / "report.json").read_text())
    assert rep["reports"] or rep["failures"]


def test_frames_detect_workers_invariant(frame_run, capsys):
    root, cfg = frame_run
    code, _, _ = run_cli(["frames", "detect", "--config", cfg, "--input", str(root / "raw"),
                          "--workers", "2", "--out", str(root / "det2")], capsys)
    assert code == 0
    for name in ("detections_position.tsv", "events_position.tsv", "events_momentum.tsv"):
        assert (root / "det" / name).read_bytes() == (root / "det2" / name).read_bytes()


def test_frames_detect_noiseless_round_trip(tmp_path, capsys):
    data = {**FRAME_CFG, "frames": {"n_frames": 1500, "margin_px": 4, "noise": False,
                                    "mean_photons_per_arm": 0.3}}
    cfg = write_cfg(tmp_path / "c.json", data)
    assert run_cli(["frames", "synth", "--config", cfg, "--out", str(tmp_path / "raw")], capsys)[0] == 0
    assert run_cli(["frames", "detect", "--config", cfg, "--input", str(tmp_path / "raw"),
                    "--out", str(tmp_path / "det")], capsys)[0] == 0
    from eprsteer.cli import _geometry, _pixel_cal
    rc = RunConfig.load(cfg)
    geo = _geometry(rc)
    dets, _ = io.read_detections(tmp_path / "det" / "detections_position.tsv")
    lines = (tmp_path / "raw" / "truth_position.tsv").read_text().splitlines()
    truth = [[] for _ in dets]
    for ln in lines:
        if ln.startswith("#") or ln.startswith("frame"):
            continue
        f, _, x, y = ln.split("\t")
        truth[int(f)].append((float(x), float(y)))
    checked = 0
    for t, d in zip(truth, dets):
        t = np.array(t).reshape(-1, 2)
        if len(t) == 0:
            assert d == []
            continue
        sep = np.hypot(*(t[:, None] - t[None]).transpose(2, 0, 1))
        if len(t) > 1 and sep[np.triu_indices(len(t), 1)].min() < 12:
            continue  # neighbouring flashes overlap through their tails
        # with exponential brightness some flashes stay below threshold, and
        # faint ones are limited by integer ADU rounding
        for dd in d:
            if dd.amplitude < 100:
                continue
            dist = np.hypot(t[:, 0] - dd.x, t[:, 1] - dd.y).min()
            assert dist < 0.05
            checked += 1
    assert checked > 200
    # calibrated event coordinates match the truth within 0.05 px
    ev, _ = io.read_events(tmp_path / "det" / "events_position.tsv")
    cal = _pixel_cal(rc, Basis.POSITION)
    x_px, _ = cal.to_pixels(geo.region_a, ev.a[:, 0], ev.a[:, 1])
    assert len(ev) > 10 and np.all((x_px >= 0) & (x_px <= geo.width - 1))


def test_frames_header_mismatch_rejected(frame_run, tmp_path, capsys):
    root, _ = frame_run
    cfg = write_cfg(tmp_path / "c.json", {**FRAME_CFG, "frames": {"margin_px": 6}})
    code, _, err = run_cli(["frames", "detect", "--config", cfg, "--input", str(root / "raw"),
                            "--out", str(tmp_path / "d")], capsys)
    assert code == 4 and "px" in err["message"]


def test_frames_missing_basis(frame_run, tmp_path, capsys):
    root, cfg = frame_run
    code, _, err = run_cli(["frames", "detect", "--config", cfg,
                            "--frames-position", str(root / "raw" / "frames_position.bin"),
                            "--out", str(tmp_path / "d")], capsys)
    assert code == 4 and err["error"] == "input"
