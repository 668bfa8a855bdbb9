"""File formats: tab-separated events and detections, JSON histograms and
reports, a binary raw-frame container and a sha256 manifest.

Every text file starts with ``#`` header lines carrying the format tag,
config digest and seed so outputs can be traced back to the run.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .model import Basis
from .sim import EventSet, GridSpec, JointHistogram

EVENTS_TAG = "eprsteer-events v1"
DETECTIONS_TAG = "eprsteer-detections v1"
HISTOGRAM_TAG = "eprsteer-histogram v1"
REPORT_TAG = "eprsteer-report v1"

FRAME_MAGIC = b"EPRF"
FRAME_VERSION = 1
# magic, version, width, height, count, basis, seed, digest
FRAME_HEADER = struct.Struct("<4s5IQ16s")
_BASIS_CODE = {Basis.POSITION: 0, Basis.MOMENTUM: 1}


def _fmt(x):
    return repr(float(x))


def _header_lines(tag, meta):
    lines = [f"# {tag}"]
    lines += [f"# {k}: {v}" for k, v in meta.items()]
    return lines


def _read_header(lines, tag, path):
    if not lines or lines[0].strip() != f"# {tag}":
        raise FormatError(f"{path}: missing '# {tag}' header", offset=0)
    meta, i = {}, 1
    while i < len(lines) and lines[i].startswith("#"):
        key, sep, value = lines[i][1:].partition(":")
        if sep:
            meta[key.strip()] = value.strip()
        i += 1
    return meta, i


def _write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _read_text(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


# ---------------------------------------------------------------- events

def write_events(path, events, digest="", seed=""):
    """Tab-separated event list; ``correlated`` (simulation truth) when known."""
    unit = events.basis.unit
    cols = [f"a_x_{unit}", f"a_y_{unit}", f"b_x_{unit}", f"b_y_{unit}"]
    has_truth = events.correlated is not None
    if has_truth:
        cols.append("correlated")
    meta = {"basis": events.basis.value, "units": unit, "n_events": len(events),
            "config_digest": digest, "seed": seed}
    lines = _header_lines(EVENTS_TAG, meta)
    lines.append("\t".join(cols))
    for i in range(len(events)):
        row = [_fmt(events.a[i, 0]), _fmt(events.a[i, 1]), _fmt(events.b[i, 0]), _fmt(events.b[i, 1])]
        if has_truth:
            row.append(str(int(events.correlated[i])))
        lines.append("\t".join(row))
    _write_text(path, "\n".join(lines) + "\n")


def read_events(path):
    """Inverse of :func:`write_events`. Returns ``(EventSet, header)``."""
    text = _read_text(path)
    lines = text.splitlines()
    meta, i = _read_header(lines, EVENTS_TAG, path)
    try:
        basis = Basis.parse(meta.get("basis", ""))
    except Exception:
        raise FormatError(f"{path}: unknown basis {meta.get('basis')!r}",
                          offset=_offset_of_line(text, 1)) from None
    if meta.get("units") != basis.unit:
        raise FormatError(f"{path}: units {meta.get('units')!r} do not match basis {basis.value}",
                          offset=0)
    if i >= len(lines):
        raise FormatError(f"{path}: missing column line", offset=len(text.encode()))
    cols = lines[i].split("\t")
    expected = [f"{arm}_{ax}_{basis.unit}" for arm in "ab" for ax in "xy"]
    if cols[:4] != expected or len(cols) not in (4, 5):
        raise FormatError(f"{path}: unexpected columns {cols}", offset=_offset_of_line(text, i))
    body = [ln for ln in lines[i + 1:] if ln.strip()]
    data = np.empty((len(body), len(cols)))
    for j, ln in enumerate(body):
        parts = ln.split("\t")
        try:
            if len(parts) != len(cols):
                raise ValueError
            data[j] = [float(v) for v in parts]
        except ValueError:
            raise FormatError(f"{path}: malformed event record {j + 1}",
                              offset=_offset_of_line(text, i + 1 + j)) from None
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite coordinate", offset=0)
    corr = data[:, 4].astype(bool) if len(cols) == 5 else None
    ev = EventSet(basis, data[:, 0:2], data[:, 2:4], corr)
    return ev, meta


def _offset_of_line(text, line_no):
    lines = text.splitlines(keepends=True)
    return sum(len(ln.encode()) for ln in lines[:line_no])


# ---------------------------------------------------------------- histograms

def histogram_to_dict(hist, extra=None):
    unit = hist.basis.unit
    ia, ib = np.nonzero(hist.counts)
    data = {
        "format": HISTOGRAM_TAG,
        "basis": hist.basis.value,
        "units": unit,
        "grid_a": {f"origin_{unit}": hist.grid_a.origin, f"delta_{unit}": hist.grid_a.delta, "n": hist.grid_a.n},
        "grid_b": {f"origin_{unit}": hist.grid_b.origin, f"delta_{unit}": hist.grid_b.delta, "n": hist.grid_b.n},
        "out_of_range": hist.out_of_range,
        "total": hist.total,
        # sparse (row, column, count) triples, row-major
        "cells": [[int(a), int(b), int(hist.counts[a, b])] for a, b in zip(ia, ib)],
    }
    if extra:
        data.update(extra)
    return data


def histogram_from_dict(data, path="<histogram>"):
    if data.get("format") != HISTOGRAM_TAG:
        raise FormatError(f"{path}: not an {HISTOGRAM_TAG} file", offset=0)
    try:
        basis = Basis.parse(data["basis"])
        unit = basis.unit
        grids = [GridSpec(float(g[f"origin_{unit}"]), float(g[f"delta_{unit}"]), int(g["n"]))
                 for g in (data["grid_a"], data["grid_b"])]
        counts = np.zeros((grids[0].n, grids[1].n), dtype=np.int64)
        for a, b, c in data["cells"]:
            counts[a, b] = c
        hist = JointHistogram(counts, grids[0], grids[1], basis, int(data.get("out_of_range", 0)))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed histogram ({exc})", offset=0) from None
    if "total" in data and hist.total != data["total"]:
        raise FormatError(f"{path}: cell counts sum to {hist.total}, header says {data['total']}", offset=0)
    return hist


def write_histogram(path, hist, extra=None):
    write_json(path, histogram_to_dict(hist, extra))


def read_histogram(path):
    data = read_json(path)
    return histogram_from_dict(data, path), data


# ---------------------------------------------------------------- JSON

def write_json(path, payload):
    _write_text(path, json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n")


def read_json(path):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg})", offset=exc.pos) from None


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


# ---------------------------------------------------------------- frames

class FrameWriter:
    """Streams uint16 frames into the binary container; the header is
    finalised with the frame count on close."""

    def __init__(self, path, width, height, basis, seed=0, digest=""):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.width, self.height = int(width), int(height)
        self.basis = Basis.parse(basis)
        self.seed, self.digest = int(seed), digest
        self.count = 0
        self._fh = open(self.path, "wb")
        self._fh.write(self._header())

    def _header(self):
        return FRAME_HEADER.pack(FRAME_MAGIC, FRAME_VERSION, self.width, self.height, self.count,
                                 _BASIS_CODE[self.basis], self.seed,
                                 self.digest.encode("ascii")[:16].ljust(16, b"\0"))

    def write(self, pixels):
        px = np.asarray(pixels)
        if px.shape != (self.height, self.width):
            raise InputError(f"frame shape {px.shape} differs from ({self.height}, {self.width})")
        self._fh.write(px.astype("<u2", copy=False).tobytes())
        self.count += 1

    def close(self):
        self._fh.seek(0)
        self._fh.write(self._header())
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_frame_header(path):
    with open(path, "rb") as fh:
        raw = fh.read(FRAME_HEADER.size)
        size = fh.seek(0, 2)
    if len(raw) < 4 or raw[:4] != FRAME_MAGIC:
        raise FormatError(f"{path}: not a raw frame file (bad magic)", offset=0)
    if len(raw) < FRAME_HEADER.size:
        raise FormatError(f"{path}: truncated frame header", offset=len(raw))
    magic, version, width, height, count, code, seed, digest = FRAME_HEADER.unpack(raw)
    if version != FRAME_VERSION:
        raise FormatError(f"{path}: unsupported frame format version {version}", offset=4)
    if width == 0 or height == 0:
        raise FormatError(f"{path}: frame width and height must be positive", offset=8)
    bases = {v: k for k, v in _BASIS_CODE.items()}
    if code not in bases:
        raise FormatError(f"{path}: unknown basis code {code}", offset=20)
    expected = FRAME_HEADER.size + 2 * width * height * count
    if size != expected:
        # report where the declared layout and the file part ways
        raise FormatError(
            f"{path}: header declares {count} frames of {width}x{height} px "
            f"({expected} bytes) but the file has {size} bytes",
            offset=min(size, expected))
    return {"width": width, "height": height, "count": count, "basis": bases[code],
            "seed": seed, "config_digest": digest.rstrip(b"\0").decode("ascii", "replace")}


def read_frames(path):
    """Header dict and a read-only ``(count, height, width)`` uint16 memmap."""
    hdr = read_frame_header(path)
    if hdr["count"] == 0:
        return hdr, np.zeros((0, hdr["height"], hdr["width"]), dtype=np.uint16)
    data = np.memmap(path, dtype="<u2", mode="r", offset=FRAME_HEADER.size,
                     shape=(hdr["count"], hdr["height"], hdr["width"]))
    return hdr, data


# ---------------------------------------------------------------- detections

def write_detections(path, detections, n_frames, digest="", seed="", basis=""):
    """Per-frame subpixel positions; frames without a record had no detection."""
    meta = {"basis": basis, "units": "px", "n_frames": n_frames,
            "config_digest": digest, "seed": seed}
    lines = _header_lines(DETECTIONS_TAG, meta)
    lines.append("frame\tx_px\ty_px\tamplitude_adu\tsaturated")
    for i, dets in enumerate(detections):
        for d in dets:
            lines.append(f"{i}\t{_fmt(d.x)}\t{_fmt(d.y)}\t{_fmt(d.amplitude)}\t{int(d.saturated)}")
    _write_text(path, "\n".join(lines) + "\n")


def read_detections(path):
    from .frames import SpotDetection

    text = _read_text(path)
    lines = text.splitlines()
    meta, i = _read_header(lines, DETECTIONS_TAG, path)
    n_frames = int(meta.get("n_frames", 0))
    out = [[] for _ in range(n_frames)]
    for j, ln in enumerate(lines[i + 1:]):
        if not ln.strip():
            continue
        try:
            f, x, y, a, s = ln.split("\t")
            out[int(f)].append(SpotDetection(float(x), float(y), float(a), bool(int(s))))
        except (ValueError, IndexError):
            raise FormatError(f"{path}: malformed detection record {j + 1}",
                              offset=_offset_of_line(text, i + 1 + j)) from None
    return out, meta


# ---------------------------------------------------------------- manifest

def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command, config, outputs, inputs=(), extra=None):
    """Manifest echoing the full config plus sha256 of every input and output."""
    path = Path(path)
    root = path.parent
    payload = {
        "command": command,
        "config": config.to_dict(),
        "config_digest": config.digest,
        "seed": config.seed,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {Path(p).relative_to(root).as_posix() if Path(p).is_relative_to(root) else str(p):
                    sha256_file(p) for p in outputs},
    }
    if extra:
        payload.update(extra)
    write_json(path, payload)
    return payload
