"""Long-pulse removal from audio by Bayesian inference."""

__version__ = "0.1.0"

from .ar import ArModel, estimate_ar_covariance
from .detector import Detection, DetectorConfig, detect_pulses
from .pipeline import RestoreConfig, inject_pulse, restore_signal, snr_db
from .pulses import GpHyper, ShapeTailParams, synth_shape_tail
from .sampler import SamplerConfig, run_gibbs
from .signal_io import Signal, read_wav, write_wav

__all__ = [
    "ArModel", "Detection", "DetectorConfig", "GpHyper", "RestoreConfig", "SamplerConfig",
    "ShapeTailParams", "Signal", "detect_pulses", "estimate_ar_covariance", "inject_pulse",
    "read_wav", "restore_signal", "run_gibbs", "snr_db", "synth_shape_tail", "write_wav",
]
