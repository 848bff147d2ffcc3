"""Qdyne: clock-synchronised qubit readout chains for GHz field spectroscopy.

The package simulates the sensing chain down to photon counts and analyses
the resulting count traces to recover the field frequency.
"""
from .chain import ChainConfig, ReducedFrequency, TimeTrace, reduce_frequency, run_chain
from .config import ExperimentConfig, preset
from .dynamics import (
    PulseSequence,
    analytic_population,
    contrast,
    find_saturation_ns,
    simulate_lab_frame,
    simulate_single_run,
)
from .errors import QdyneError
from .estimator import PowerSpectrumTransformer, QdyneFrequencyEstimator
from .metrology import crb_scaling_experiment, qfi_chain, qfi_single
from .noise import OuParams, OuState, ou_advance, ou_init
from .physics import Sensor, SignalField, derive_rotating_frame, validate_regime
from .readout import ReadoutModel, count_mean, count_variance, sample_photons
from .spectrum import fit_peak, peak_search, power_spectrum, reconstruct_frequency

__version__ = "0.1.0"

__all__ = [
    "ChainConfig",
    "ExperimentConfig",
    "OuParams",
    "OuState",
    "PowerSpectrumTransformer",
    "PulseSequence",
    "QdyneError",
    "QdyneFrequencyEstimator",
    "ReadoutModel",
    "ReducedFrequency",
    "Sensor",
    "SignalField",
    "TimeTrace",
    "analytic_population",
    "contrast",
    "count_mean",
    "count_variance",
    "crb_scaling_experiment",
    "derive_rotating_frame",
    "find_saturation_ns",
    "fit_peak",
    "ou_advance",
    "ou_init",
    "peak_search",
    "power_spectrum",
    "preset",
    "qfi_chain",
    "qfi_single",
    "reconstruct_frequency",
    "reduce_frequency",
    "run_chain",
    "sample_photons",
    "simulate_lab_frame",
    "simulate_single_run",
    "validate_regime",
]
