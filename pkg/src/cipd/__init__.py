"""Charge-integration photon-number-resolving detector toolkit.

Analytic CDS noise budget, staircase trace synthesis, CDS readout and
Poisson analysis of photon-number histograms.
"""
from .noise_model import (
    CdsConfig,
    DetectorParams,
    NoiseSpectrum,
    box_gain,
    cds_noise_voltage,
    comb_gain,
    lowpass_gain_sq,
    resolution_electrons,
    signal_per_carrier,
    spectral_density,
)
from .quadrature import QuadratureError
from .readout import CdsWindow, ReadoutResult, cds_estimate, extract_staircase, quantize_counts, read_out
from .signal_sim import PulseSchedule, RtsParams, Trace, synthesize_trace
from .statistics import Histogram, PoissonFit, build_histogram, fit_poisson, poisson_pmf

__version__ = "0.1.0"
