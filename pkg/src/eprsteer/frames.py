"""Synthetic intensified-camera frames and subpixel photon localization.

Pixel ``(row, col)`` has its centre at ``(y, x) = (row, col)``.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ._backend import kernels
from .errors import ConfigError, DomainError
from .model import Basis
from .sim import EventSet

ADU_MAX = 2047
FWHM_TO_SD = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class CameraModel:
    pixel_pitch: float = 6.5  # um
    offset: float = 100.0  # ADU
    offset_variation: float = 5.0  # ADU, peak-to-peak across the sensor
    noise_sd: float = 2.5  # ADU
    fwhm: float = 5.0  # px
    mean_amplitude: float = 1250.0  # ADU above offset, brightest pixel
    saturation: int = ADU_MAX

    def __post_init__(self):
        if self.fwhm < 2.0:
            raise DomainError("spot FWHM must be at least 2 pixels")
        for name in ("pixel_pitch", "offset", "noise_sd", "mean_amplitude"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")

    @property
    def spot_sd(self):
        return self.fwhm * FWHM_TO_SD


@dataclass
class Frame:
    pixels: np.ndarray  # uint16 ADU
    index: int = 0

    @property
    def shape(self):
        return self.pixels.shape


@dataclass(frozen=True)
class SpotDetection:
    x: float
    y: float
    amplitude: float
    saturated: bool = False


def offset_map(shape, model, seed):
    """Fixed-pattern offset: a smooth tilt within ``offset_variation``."""
    if model.offset_variation == 0:
        return np.full(shape, model.offset)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0FF5E7]))
    gy, gx = rng.uniform(-1, 1, 2)
    h, w = shape
    yy = np.linspace(-0.5, 0.5, h)[:, None]
    xx = np.linspace(-0.5, 0.5, w)[None, :]
    return model.offset + 0.5 * model.offset_variation * (gy * yy + gx * xx)


def render_spots(truth, amplitudes, shape, sd):
    """Noise-free, unclipped spot intensity (ADU above offset), point-sampled
    at pixel centres."""
    h, w = shape
    img = np.zeros(shape)
    reach = int(math.ceil(6 * sd))
    for (x, y), a in zip(np.asarray(truth, dtype=float).reshape(-1, 2), amplitudes):
        x0, x1 = max(int(x) - reach, 0), min(int(x) + reach + 2, w)
        y0, y1 = max(int(y) - reach, 0), min(int(y) + reach + 2, h)
        gx = np.exp(-0.5 * ((np.arange(x0, x1) - x) / sd) ** 2)
        gy = np.exp(-0.5 * ((np.arange(y0, y1) - y) / sd) ** 2)
        img[y0:y1, x0:x1] += a * np.outer(gy, gx)
    return img


def synthesize_frame(truth, model, shape, seed, amplitudes=None, noise=True, index=0,
                     offset=None):
    """Render photons at ``truth`` (``(n, 2)`` array of x, y in px) into one frame.

    Amplitudes default to exponential draws with mean ``model.mean_amplitude``.
    """
    truth = np.asarray(truth, dtype=float).reshape(-1, 2)
    h, w = shape
    if truth.size and (np.any(truth[:, 0] < 0) or np.any(truth[:, 0] > w - 1)
                       or np.any(truth[:, 1] < 0) or np.any(truth[:, 1] > h - 1)):
        raise DomainError("photon position outside the frame")
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    if amplitudes is None:
        amplitudes = rng.exponential(model.mean_amplitude, truth.shape[0])
    amplitudes = np.broadcast_to(np.asarray(amplitudes, dtype=float), (truth.shape[0],))
    img = np.array(offset_map(shape, model, seed) if offset is None else offset, dtype=float)
    img += render_spots(truth, amplitudes, shape, model.spot_sd)
    if noise:
        img += rng.normal(0.0, model.noise_sd, shape)
    px = np.clip(np.rint(img), 0, model.saturation).astype(np.uint16)
    return Frame(px, index)


def detect_spots(frame, model, threshold_multiple=5.0, fit_radius=3, offset=None,
                 min_support=5, backend=None):
    """Subpixel photon positions in one frame.

    Pixels more than ``threshold_multiple`` noise s.d. above the offset that
    dominate their ``fit_radius`` disk are candidates. A candidate is kept
    when at least ``min_support`` pixels of its disk clear the threshold,
    which rejects isolated noise excursions. The apex of a paraboloid fitted
    to the log of offset-subtracted intensity (pixels under 1 ADU excluded)
    gives the position. Saturated pixels are excluded from the fit and a
    clipped peak is re-anchored on its plateau. Spots closer than
    ``fit_radius`` merge.
    """
    k = kernels if backend is None else backend
    raw = np.ascontiguousarray(frame.pixels if isinstance(frame, Frame) else frame, dtype=np.uint16)
    base = model.offset if offset is None else offset
    signal = np.ascontiguousarray(raw.astype(float) - base)
    thr = threshold_multiple * model.noise_sd
    ys, xs = k.find_peaks(signal, thr, float(fit_radius))
    if ys.size and min_support > 1:
        keep = _support(signal, ys, xs, thr, fit_radius) >= min_support
        ys, xs = ys[keep], xs[keep]
    if ys.size == 0:
        return []
    clipped = raw >= model.saturation
    sat = clipped[ys, xs]
    if sat.any():
        # one candidate per saturated plateau, however wide it is
        labels, _ = ndimage.label(clipped)
        lab = np.where(sat, labels[ys, xs], -1 - np.arange(ys.size))
        _, first = np.unique(lab, return_index=True)
        first.sort()
        ys, xs, sat, lab = ys[first], xs[first], sat[first], lab[first]
    x, y, a, flag = k.fit_peaks(signal, raw, np.ascontiguousarray(ys, dtype=np.int64),
                                np.ascontiguousarray(xs, dtype=np.int64),
                                float(fit_radius), float(model.saturation))
    for i in np.flatnonzero(sat):
        x[i], y[i], a[i] = _fit_saturated(signal, raw, labels == lab[i], fit_radius,
                                          model.saturation, k)
    h, w = raw.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    return [SpotDetection(float(xi), float(yi), float(ai), bool(si))
            for xi, yi, ai, si in zip(x, y, a, flag)]


def _fit_saturated(signal, raw, plateau, radius, saturation, k):
    """Refit a peak whose core is clipped: anchor at the centroid of the
    saturated plateau and widen the disk so enough unclipped pixels remain."""
    cy, cx = ndimage.center_of_mass(plateau)
    r = float(radius) + math.ceil(math.sqrt(plateau.sum() / math.pi))
    x, y, a, _ = k.fit_peaks(signal, raw, np.array([int(round(cy))], dtype=np.int64),
                             np.array([int(round(cx))], dtype=np.int64), r, float(saturation))
    return x[0], y[0], a[0]


def _support(signal, ys, xs, thr, radius):
    h, w = signal.shape
    counts = np.zeros(ys.size, dtype=np.int64)
    r = int(radius)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy * dy + dx * dx > radius * radius:
                continue
            yy, xx = ys + dy, xs + dx
            ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            hit = np.zeros(ys.size, dtype=bool)
            hit[ok] = signal[yy[ok], xx[ok]] > thr
            counts += hit
    return counts


@dataclass(frozen=True)
class CircularRegion:
    cx: float
    cy: float
    radius: float

    def contains(self, x, y):
        return (np.asarray(x) - self.cx) ** 2 + (np.asarray(y) - self.cy) ** 2 <= self.radius ** 2

    def overlaps(self, other):
        return math.hypot(self.cx - other.cx, self.cy - other.cy) < self.radius + other.radius


@dataclass(frozen=True)
class PixelCalibration:
    """Linear px -> physical map, measured from each region's centre.

    ``scale`` is physical units (um or mm^-1) per camera pixel.
    """

    basis: Basis
    scale: float

    def to_physical(self, region, x, y):
        return ((np.asarray(x) - region.cx) * self.scale, (np.asarray(y) - region.cy) * self.scale)

    def to_pixels(self, region, u, v):
        return (region.cx + np.asarray(u) / self.scale, region.cy + np.asarray(v) / self.scale)


@dataclass
class EventTally:
    events: EventSet
    reasons: Counter = field(default_factory=Counter)
    frame_index: np.ndarray | None = None


def frames_to_events(detections, region_a, region_b, calibration):
    """Keep frames with exactly one detection in each region.

    ``detections`` is a sequence (one entry per frame, in frame order) of
    detection lists or ``(n, 2)`` arrays of (x, y) px.
    """
    if region_a.overlaps(region_b):
        raise ConfigError("detection regions A and B overlap")
    a_rows, b_rows, idx = [], [], []
    reasons = Counter()
    for i, dets in enumerate(detections):
        pts = _as_points(dets)
        in_a = region_a.contains(pts[:, 0], pts[:, 1])
        in_b = region_b.contains(pts[:, 0], pts[:, 1])
        na, nb = int(in_a.sum()), int(in_b.sum())
        if na == 1 and nb == 1:
            pa = pts[in_a][0]
            pb = pts[in_b][0]
            a_rows.append(calibration.to_physical(region_a, pa[0], pa[1]))
            b_rows.append(calibration.to_physical(region_b, pb[0], pb[1]))
            idx.append(i)
            reasons["coincidence"] += 1
        else:
            reasons[_reason(na, nb)] += 1
    a = np.array(a_rows, dtype=float).reshape(-1, 2)
    b = np.array(b_rows, dtype=float).reshape(-1, 2)
    return EventTally(EventSet(calibration.basis, a, b), reasons, np.array(idx, dtype=np.int64))


def _as_points(dets):
    if isinstance(dets, np.ndarray):
        return dets.reshape(-1, 2).astype(float)
    return np.array([(d.x, d.y) for d in dets], dtype=float).reshape(-1, 2)


def _reason(na, nb):
    parts = []
    for arm, n in (("A", na), ("B", nb)):
        if n == 0:
            parts.append(f"missing {arm}")
        elif n > 1:
            parts.append(f"multiple {arm}")
    return ", ".join(parts)


@dataclass(frozen=True)
class FrameGeometry:
    """Two side-by-side circular detection regions on one sensor."""

    width: int
    height: int
    region_a: CircularRegion
    region_b: CircularRegion

    @property
    def shape(self):
        return (self.height, self.width)


def frame_geometry(n_cells, margin=8, width=0, height=0):
    """Regions of diameter ``n_cells`` px whose pixel edges line up with the
    analysis grid cells (one pixel per cell, centred grid)."""
    r = 0.5 * n_cells
    need_w, need_h = 2 * n_cells + 3 * margin, n_cells + 2 * margin
    width = width or need_w
    height = height or need_h
    if width < need_w or height < need_h:
        raise ConfigError(f"a {width}x{height} frame cannot hold two regions of {n_cells} px")
    cy = margin + r - 0.5
    a = CircularRegion(margin + r - 0.5, cy, r)
    b = CircularRegion(2 * margin + 3 * r - 0.5, cy, r)
    return FrameGeometry(int(width), int(height), a, b)


@dataclass
class FrameTruth:
    """Ground-truth photon positions (px) per frame, arm labels 0/1."""

    positions: list
    arms: list
    dropped: int = 0


def sample_frame_truth(state, basis, n_frames, mean_photons, calibration, geometry, seed):
    """Independent Poisson photon numbers per arm and frame.

    Frames with exactly one photon per arm receive a pair drawn from the
    coincidence model; every other photon follows its arm's marginal.
    Photons landing off the sensor are dropped and counted.
    """
    from .model import marginal_variance
    from .sim import sample_pairs

    basis = Basis.parse(basis)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_counts, s_pairs, s_single = ss.spawn(3)
    rng = np.random.default_rng(s_counts)
    n = rng.poisson(mean_photons, (int(n_frames), 2))
    single = (n[:, 0] == 1) & (n[:, 1] == 1)
    pairs = sample_pairs(state, int(single.sum()), basis, s_pairs)
    m = math.sqrt(marginal_variance(state, basis))
    srng = np.random.default_rng(s_single)
    positions, arms, dropped, j = [], [], 0, 0
    regions = (geometry.region_a, geometry.region_b)
    for i in range(int(n_frames)):
        if single[i]:
            phys = [pairs.a[j:j + 1], pairs.b[j:j + 1]]
            j += 1
        else:
            phys = [srng.normal(0.0, m, (n[i, arm], 2)) for arm in (0, 1)]
        pts, lab = [], []
        for arm in (0, 1):
            px, py = calibration.to_pixels(regions[arm], phys[arm][:, 0], phys[arm][:, 1])
            ok = (px >= 0) & (px <= geometry.width - 1) & (py >= 0) & (py <= geometry.height - 1)
            dropped += int(np.count_nonzero(~ok))
            pts.append(np.column_stack([px[ok], py[ok]]))
            lab.append(np.full(int(ok.sum()), arm))
        positions.append(np.concatenate(pts))
        arms.append(np.concatenate(lab))
    return FrameTruth(positions, arms, dropped)
