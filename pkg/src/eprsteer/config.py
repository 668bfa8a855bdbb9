"""Run configuration: JSON files with explicit unit suffixes on every key."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .entropy import Estimator
from .errors import ConfigError
from .model import BiphotonState
from .sim import calibration_cells

SCHEMA_VERSION = 1


@dataclass
class StateConfig:
    sigma_um: float = 6.25
    kappa_per_mm: float = 7.75
    q: float = 0.5

    def build(self):
        return BiphotonState(self.sigma_um, self.kappa_per_mm, self.q)


@dataclass
class CalibrationConfig:
    delta_b_um: float = 31.0
    magnification: float = 8.0
    wavelength_nm: float = 800.0
    f_eff_mm: float = 50.0
    rel_magnification: float = 0.0
    rel_f_eff: float = 0.0
    n_cells: int = 100

    def build(self):
        return calibration_cells(self.delta_b_um, self.magnification, self.wavelength_nm,
                                 self.f_eff_mm, self.rel_magnification, self.rel_f_eff)


@dataclass
class HeraldConfig:
    enabled: bool = True
    window_multiple: float = 2.0
    circular_mask: bool = False


@dataclass
class WitnessMapConfig:
    K_min: float = 1.0
    K_max: float = 20.0
    q_min: float = 0.0
    q_max: float = 1.0
    n_K: int = 50
    n_q: int = 50
    n_nodes: int = 512


@dataclass
class FrameConfig:
    """Camera geometry for ``frames synth``/``frames detect``.

    One frame pixel is one detector bin, so the detection regions of
    diameter ``n_cells`` pixels map onto the analysis grids.
    """

    n_frames: int = 10000
    mean_photons_per_arm: float = 0.1
    width_px: int = 0
    height_px: int = 0
    margin_px: int = 8
    noise: bool = True
    threshold_multiple: float = 5.0
    fit_radius_px: float = 3.0
    pixel_pitch_um: float = 6.5
    offset_adu: float = 100.0
    offset_variation_adu: float = 5.0
    noise_sd_adu: float = 2.5
    fwhm_px: float = 5.0
    mean_amplitude_adu: float = 1250.0


@dataclass
class RunConfig:
    state: StateConfig = field(default_factory=StateConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    herald: HeraldConfig = field(default_factory=HeraldConfig)
    witness_map: WitnessMapConfig = field(default_factory=WitnessMapConfig)
    frames: FrameConfig = field(default_factory=FrameConfig)
    n_pairs: int = 3000
    estimators: list = field(default_factory=lambda: [e.value for e in Estimator])
    ml_background: str = "product"
    n_bootstrap: int = 200
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        s = self.state
        _positive(s.sigma_um, "state.sigma_um")
        _positive(s.kappa_per_mm, "state.kappa_per_mm")
        if not 0.0 <= s.q <= 1.0:
            raise ConfigError(f"state.q must lie in [0, 1], got {s.q}")
        c = self.calibration
        for name in ("delta_b_um", "magnification", "wavelength_nm", "f_eff_mm"):
            _positive(getattr(c, name), f"calibration.{name}")
        if c.rel_magnification < 0 or c.rel_f_eff < 0:
            raise ConfigError("calibration uncertainties must be non-negative")
        _int_at_least(c.n_cells, 2, "calibration.n_cells")
        _positive(self.herald.window_multiple, "herald.window_multiple")
        m = self.witness_map
        if not 1.0 <= m.K_min < m.K_max:
            raise ConfigError("witness_map needs 1 <= K_min < K_max")
        if not 0.0 <= m.q_min < m.q_max <= 1.0:
            raise ConfigError("witness_map needs 0 <= q_min < q_max <= 1")
        _int_at_least(m.n_K, 2, "witness_map.n_K")
        _int_at_least(m.n_q, 2, "witness_map.n_q")
        _int_at_least(m.n_nodes, 16, "witness_map.n_nodes")
        f = self.frames
        _int_at_least(f.n_frames, 0, "frames.n_frames")
        if not f.mean_photons_per_arm >= 0:
            raise ConfigError("frames.mean_photons_per_arm must be non-negative")
        for name in ("threshold_multiple", "fit_radius_px", "pixel_pitch_um", "offset_adu",
                     "noise_sd_adu", "mean_amplitude_adu"):
            _positive(getattr(f, name), f"frames.{name}")
        if f.fwhm_px < 2:
            raise ConfigError("frames.fwhm_px must be at least 2")
        _int_at_least(self.n_pairs, 0, "n_pairs")
        _int_at_least(self.n_bootstrap, 0, "n_bootstrap")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed must be an explicit non-negative integer")
        if not self.estimators:
            raise ConfigError("at least one estimator must be selected")
        for e in self.estimators:
            try:
                Estimator(e)
            except ValueError:
                raise ConfigError(f"unknown estimator {e!r}") from None
        if self.ml_background not in ("product", "flat"):
            raise ConfigError("ml_background must be 'product' or 'flat'")

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, **asdict(self)}

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def digest(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    @property
    def cells(self):
        return self.calibration.build()

    def with_seed(self, seed):
        data = self.to_dict()
        data["seed"] = seed
        return RunConfig.from_dict(data)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {version}")
        return _build(cls, data, "")

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)


def _build(cls, data, prefix):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(prefix + k for k in unknown))}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        default = getattr(defaults, name)
        if is_dataclass(default):
            if not isinstance(value, dict):
                raise ConfigError(f"{prefix}{name} must be an object")
            kwargs[name] = _build(type(default), value, f"{prefix}{name}.")
        else:
            kwargs[name] = _coerce(value, default, prefix + name)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _coerce(value, default, name):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{name} must be a finite number")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{name} must be a list")
        return list(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{name} must be a string")
    return value


def _positive(v, name):
    if not v > 0:
        raise ConfigError(f"{name} must be positive, got {v}")


def _int_at_least(v, lo, name):
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(f"{name} must be an integer >= {lo}, got {v!r}")
