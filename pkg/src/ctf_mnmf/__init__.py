"""Blind source separation with a convolutive-transfer-function (CTF) mixing
model and a multichannel NMF source model.

The demixing matrices can be updated by iterative projection (IP) or by the
inversion-free iterative source steering (ISS) rule; NMF factors use
multiplicative updates, and source images are recovered by a multichannel
Wiener filter.
"""
from importlib.metadata import PackageNotFoundError, version

from .bench import benchmark_rules, fit_power_law, time_row_updates
from .estimator import (
    DegeneracyError,
    OptimizationTrace,
    RowUpdate,
    compute_weighted_covariance,
    demix,
    ip_update,
    iss_apply,
    iss_compute_z,
    mu_update_activations,
    mu_update_bases,
    objective,
    rescale,
    run,
    update_demixing,
)
from .metrics import SeparationReport, align_and_score, si_sdr
from .model import (
    ConfigError,
    CtfConfig,
    NmfFactors,
    compute_psd,
    flatten_index,
    read_config_file,
    unflatten_index,
)
from .stft import (
    Spectrogram,
    TimeSignal,
    forward_stft,
    inverse_stft,
    load_spectrogram,
    read_wav,
    save_spectrogram,
    write_wav,
)
from .synth import (
    ConditioningError,
    GroundTruth,
    generate_ctf_mixture,
    generate_time_mixture,
    sample_ctf_filters,
    sample_nmf_sources,
    simulate_ctf,
)
from .wiener import images_to_signals, reconstruct_images, wiener_gains

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "ConditioningError",
    "ConfigError",
    "CtfConfig",
    "DegeneracyError",
    "GroundTruth",
    "NmfFactors",
    "OptimizationTrace",
    "RowUpdate",
    "SeparationReport",
    "Spectrogram",
    "TimeSignal",
    "align_and_score",
    "benchmark_rules",
    "compute_psd",
    "compute_weighted_covariance",
    "demix",
    "fit_power_law",
    "flatten_index",
    "forward_stft",
    "generate_ctf_mixture",
    "generate_time_mixture",
    "images_to_signals",
    "inverse_stft",
    "ip_update",
    "iss_apply",
    "iss_compute_z",
    "load_spectrogram",
    "mu_update_activations",
    "mu_update_bases",
    "objective",
    "read_config_file",
    "read_wav",
    "reconstruct_images",
    "rescale",
    "run",
    "sample_ctf_filters",
    "sample_nmf_sources",
    "save_spectrogram",
    "si_sdr",
    "simulate_ctf",
    "time_row_updates",
    "unflatten_index",
    "update_demixing",
    "wiener_gains",
    "write_wav",
]
