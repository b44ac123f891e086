"""Analytic noise budget of a correlated-double-sampling (CDS) readout.

A CDS reading subtracts the average output over one interval from the
average over a later interval. In the frequency domain the readout chain
applies three filters to the amplifier voltage noise:

* the sampling difference, a comb ``2|sin(pi f T)|`` with zeros at ``k/T``;
* the averaging window of length ``T0``, a normalized sinc;
* the circuit's single-pole low-pass at ``fc``.

The rms noise is the square root of the filtered spectral density integrated
over frequency. Dividing it by the voltage step produced by one carrier gives
the resolution in electrons.

All quantities are SI: volts, farads, seconds, hertz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .quadrature import QuadratureError, QuadResult, integrate

ELEMENTARY_CHARGE = 1.602176634e-19  # C, exact

# Initial-panel cap for very long integration times; adaptivity refines beyond.
_MAX_INITIAL_PANELS = 200_000


def _check_finite(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class DetectorParams:
    """Charge-to-voltage chain of the integrating front end."""

    gm: float = 0.85
    c_input: float = 6.7e-14
    quantum_efficiency: float = 0.80
    dark_rate: float = 500.0 / 3600.0
    elementary_charge: float = field(default=ELEMENTARY_CHARGE, init=False)

    def __post_init__(self):
        for name in ("gm", "c_input", "quantum_efficiency", "dark_rate"):
            _check_finite(name, getattr(self, name))
        if not 0.0 < self.gm <= 1.0:
            raise ValueError("gm must lie in (0, 1]")
        if self.c_input <= 0:
            raise ValueError("c_input must be positive")
        if not 0.0 <= self.quantum_efficiency <= 1.0:
            raise ValueError("quantum_efficiency must lie in [0, 1]")
        if self.dark_rate < 0:
            raise ValueError("dark_rate must be non-negative")


@dataclass(frozen=True)
class NoiseSpectrum:
    """Voltage noise density ``A^2 (1 Hz/f)^alpha + W^2`` in V^2/Hz."""

    amplitude_1hz: float = 470e-9
    flicker_exponent: float = 1.0
    white_floor: float = 0.0

    def __post_init__(self):
        for name in ("amplitude_1hz", "flicker_exponent", "white_floor"):
            _check_finite(name, getattr(self, name))
        if self.amplitude_1hz < 0:
            raise ValueError("amplitude_1hz must be non-negative")
        if self.white_floor < 0:
            raise ValueError("white_floor must be non-negative")
        if not 0.0 <= self.flicker_exponent < 2.0:
            raise ValueError("flicker_exponent must lie in [0, 2)")

    @property
    def is_zero(self) -> bool:
        return self.amplitude_1hz == 0 and self.white_floor == 0


@dataclass(frozen=True)
class CdsConfig:
    """CDS timing: sample spacing ``t_integration``, pulse width, filter cutoff.

    ``t_average`` defaults to ``t_integration - pulse_width``, the longest
    averaging window that fits between pulses.
    """

    t_integration: float = 1.0
    pulse_width: float = 0.010
    f_cutoff: float = 20.0
    t_average: float | None = None

    def __post_init__(self):
        for name in ("t_integration", "pulse_width", "f_cutoff"):
            _check_finite(name, getattr(self, name))
        if not 0.0 < self.pulse_width < self.t_integration:
            raise ValueError("need 0 < pulse_width < t_integration")
        if self.f_cutoff <= 0:
            raise ValueError("f_cutoff must be positive")
        if self.t_average is not None:
            _check_finite("t_average", self.t_average)
            limit = self.t_integration - self.pulse_width
            if not 0.0 < self.t_average <= limit * (1 + 1e-12):
                raise ValueError("need 0 < t_average <= t_integration - pulse_width")

    @property
    def averaging_time(self) -> float:
        if self.t_average is None:
            return self.t_integration - self.pulse_width
        return self.t_average


def _nonneg_freq(f):
    f = _check_finite("f", f)
    if np.any(f < 0):
        raise ValueError("frequency must be non-negative")
    return f


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def comb_gain(f, t_integration: float):
    """|F(f)| = 2|sin(pi f T)| of the two-sample difference."""
    f = _nonneg_freq(f)
    t_integration = float(_check_finite("t_integration", t_integration))
    if t_integration <= 0:
        raise ValueError("t_integration must be positive")
    return _scalar_or_array(2.0 * np.abs(np.sin(np.pi * f * t_integration)))


def box_gain(f, t_average: float):
    """Normalized averaging-window gain |sin(pi T0 f)/(pi T0 f)|, 1 at DC."""
    f = _nonneg_freq(f)
    t_average = float(_check_finite("t_average", t_average))
    if t_average <= 0:
        raise ValueError("t_average must be positive")
    # np.sinc(x) = sin(pi x)/(pi x)
    return _scalar_or_array(np.abs(np.sinc(f * t_average)))


def lowpass_gain_sq(f, f_cutoff: float):
    f = _nonneg_freq(f)
    f_cutoff = float(_check_finite("f_cutoff", f_cutoff))
    if f_cutoff <= 0:
        raise ValueError("f_cutoff must be positive")
    return _scalar_or_array(1.0 / (1.0 + (f / f_cutoff) ** 2))


def spectral_density(spec: NoiseSpectrum, f):
    """One-sided voltage noise power density in V^2/Hz; ``f`` must be > 0."""
    f = _check_finite("f", f)
    if np.any(f <= 0):
        raise ValueError("spectral density is defined for f > 0 only")
    density = spec.amplitude_1hz**2 * f ** (-spec.flicker_exponent) + spec.white_floor**2
    return _scalar_or_array(density)


def _filtered_density(spec: NoiseSpectrum, cds: CdsConfig):
    T = cds.t_integration
    T0 = cds.averaging_time
    fc = cds.f_cutoff
    A2 = spec.amplitude_1hz**2
    W2 = spec.white_floor**2
    alpha = spec.flicker_exponent

    def integrand(f):
        # Quadrature nodes are interior, so f > 0 here.
        s = A2 * f ** (-alpha) + W2
        comb2 = 4.0 * np.sin(np.pi * f * T) ** 2
        box2 = np.sinc(f * T0) ** 2
        return s * comb2 * box2 / (1.0 + (f / fc) ** 2)

    return integrand


def tail_bound(spec: NoiseSpectrum, cds: CdsConfig, f_max: float) -> float:
    """Upper bound on the noise power above ``f_max``.

    Uses comb^2 <= 4, box^2 <= 1/(pi T0 f)^2 and lowpass <= (fc/f)^2.
    """
    T0 = cds.averaging_time
    k = 4.0 * cds.f_cutoff**2 / (math.pi * T0) ** 2
    alpha = spec.flicker_exponent
    flicker = spec.amplitude_1hz**2 * f_max ** (-(3.0 + alpha)) / (3.0 + alpha)
    white = spec.white_floor**2 * f_max**-3.0 / 3.0
    return k * (flicker + white)


@dataclass(frozen=True)
class NoiseIntegral:
    """CDS noise power with its error budget."""

    variance: float
    quad_error: float
    tail_bound: float
    f_max: float
    n_panels: int

    @property
    def rms(self) -> float:
        return math.sqrt(self.variance)


def cds_noise_integral(
    spec: NoiseSpectrum,
    cds: CdsConfig,
    rel_tol: float = 1e-6,
    f_max_factor: float = 1e3,
) -> NoiseIntegral:
    """Integrate the filtered spectral density over ``(0, f_max_factor * fc]``.

    Panels start at the comb zeros ``k/T`` so each one holds a single smooth
    lobe. The discarded tail is bounded analytically, not added.

    Raises :class:`~cipd.quadrature.QuadratureError` (carrying the partial
    estimate) when the tolerance cannot be met.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    f_max = f_max_factor * cds.f_cutoff
    if spec.is_zero:
        return NoiseIntegral(0.0, 0.0, 0.0, f_max, 0)

    n_lobes = int(math.ceil(f_max * cds.t_integration))
    n_panels = min(max(n_lobes, 1), _MAX_INITIAL_PANELS)
    edges = np.linspace(0.0, f_max, n_panels + 1)
    res: QuadResult = integrate(_filtered_density(spec, cds), edges, rel_tol=rel_tol)
    return NoiseIntegral(
        variance=res.value,
        quad_error=res.abs_error,
        tail_bound=tail_bound(spec, cds, f_max),
        f_max=f_max,
        n_panels=res.n_panels,
    )


def cds_noise_voltage(spec: NoiseSpectrum, cds: CdsConfig, rel_tol: float = 1e-6) -> float:
    """RMS voltage noise of one CDS reading, in volts."""
    return cds_noise_integral(spec, cds, rel_tol=rel_tol).rms


def signal_per_carrier(det: DetectorParams) -> float:
    """Output voltage step for one integrated carrier: GM * q / C_input."""
    return det.gm * det.elementary_charge / det.c_input


def resolution_electrons(
    det: DetectorParams, spec: NoiseSpectrum, cds: CdsConfig, rel_tol: float = 1e-6
) -> float:
    return cds_noise_voltage(spec, cds, rel_tol=rel_tol) / signal_per_carrier(det)


__all__ = [
    "ELEMENTARY_CHARGE",
    "CdsConfig",
    "DetectorParams",
    "NoiseIntegral",
    "NoiseSpectrum",
    "QuadratureError",
    "box_gain",
    "cds_noise_integral",
    "cds_noise_voltage",
    "comb_gain",
    "lowpass_gain_sq",
    "resolution_electrons",
    "signal_per_carrier",
    "spectral_density",
    "tail_bound",
]
