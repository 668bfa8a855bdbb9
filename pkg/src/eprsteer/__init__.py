"""Entropic EPR-steering certification for noisy high-dimensional biphoton sources.

Simulate coincidences of a Gaussian biphoton state mixed with accidental
background, estimate conditional Shannon entropies from undersampled
histograms and turn them into steering and entanglement-of-formation bounds.
"""
from ._backend import BACKEND
from .entropy import (EntropyEstimate, Estimator, conditional_entropy, ml_conditional_entropy,
                      ml_entropy, nsb_entropy, plugin_entropy, pym_entropy)
from .errors import (AccuracyError, ConfigError, DomainError, EprSteerError, FitError,
                     FormatError, InputError)
from .frames import (CameraModel, CircularRegion, Frame, PixelCalibration, SpotDetection,
                     detect_spots, frames_to_events, synthesize_frame)
from .model import (Basis, BiphotonState, WitnessMap, coarse_grained_entropy_sum,
                    conditional_differential_entropy, differential_entropy_sum,
                    entropy_sum_closed_form, joint_density, schmidt_number,
                    variance_witness_analytic, witness_map)
from .sim import (CellCalibration, CoincidenceEvent, EventSet, GridSpec, JointHistogram, PairSet,
                  bin_events, calibration_cells, herald_postselect, heralded_state, sample_pairs)
from .witnesses import (WitnessReport, entropic_witness, reid_witness_binned,
                        reid_witness_empirical)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AccuracyError", "Basis", "BiphotonState", "CameraModel", "CellCalibration",
    "CircularRegion", "CoincidenceEvent", "ConfigError", "DomainError", "EntropyEstimate",
    "EprSteerError", "Estimator", "EventSet", "FitError", "FormatError", "Frame", "GridSpec",
    "InputError", "JointHistogram", "PairSet", "PixelCalibration", "SpotDetection", "WitnessMap",
    "WitnessReport", "bin_events", "calibration_cells", "coarse_grained_entropy_sum",
    "conditional_differential_entropy", "conditional_entropy", "detect_spots",
    "differential_entropy_sum", "entropic_witness", "entropy_sum_closed_form",
    "frames_to_events", "herald_postselect", "heralded_state", "joint_density",
    "ml_conditional_entropy", "ml_entropy", "nsb_entropy", "plugin_entropy", "pym_entropy",
    "reid_witness_binned", "reid_witness_empirical", "sample_pairs", "schmidt_number",
    "synthesize_frame", "variance_witness_analytic", "witness_map",
]
