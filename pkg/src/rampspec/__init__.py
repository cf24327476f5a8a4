"""Diabatic-ramp spectroscopy simulator for the uniform-coupling
transverse-field Ising model.

The subpackages follow the pipeline: ``spin_model`` (Hamiltonian and exact
spectra), ``evolution`` (ramp propagation), ``observables`` (occupancy time
series), ``noise`` (decoherence and counting statistics), ``spectral``
(Fourier analysis and sensing operators), ``recovery`` (sparse line
recovery), ``pipeline`` (end-to-end runs and statistics), ``cli``/``config``
(front end).
"""

__version__ = "0.1.0"

from .spin_model import ModelParams, build_hamiltonian, diagonalize, minimum_gap
from .evolution import IntegratorConfig, RampSchedule, evolve_ramp, initial_ground_state
from .observables import TimeSeries, occupancy_timeseries
from .noise import NoiseConfig, apply_decoherence, simulate_counts
from .spectral import FrequencyGrid, SpectrumEstimate, dft, idft
from .recovery import RecoveryConfig, cross_validate_tau, extract_peaks, sparsa_recover
from .pipeline import ProtocolConfig, run_protocol, run_spectrum_sweep

__all__ = [
    "__version__",
    "ModelParams", "build_hamiltonian", "diagonalize", "minimum_gap",
    "IntegratorConfig", "RampSchedule", "evolve_ramp", "initial_ground_state",
    "TimeSeries", "occupancy_timeseries",
    "NoiseConfig", "apply_decoherence", "simulate_counts",
    "FrequencyGrid", "SpectrumEstimate", "dft", "idft",
    "RecoveryConfig", "cross_validate_tau", "extract_peaks", "sparsa_recover",
    "ProtocolConfig", "run_protocol", "run_spectrum_sweep",
]
