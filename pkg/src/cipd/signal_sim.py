"""Synthesis of integrating-detector output traces.

A trace is the source-follower output sampled on a uniform grid. Charge
accumulates on the gate node in integer carriers (photo-carriers from the
light pulses plus dark carriers) and is cleared by an idealized mechanical
reset. Amplifier noise (flicker + white) and optional random telegraph
switching are added on top of the charge signal.

Every generator takes an explicit integer seed and is bit-reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.fft import irfft, rfftfreq

from .noise_model import DetectorParams, NoiseSpectrum, signal_per_carrier

# Stream indices for the per-trace SeedSequence children.
_STREAMS = ("photons", "thinning", "dark", "noise", "rts")
# Relative slack when deciding whether a sample time lies on a pulse edge.
_EDGE_EPS = 1e-9


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class PulseSchedule:
    """Train of light pulses, one per period.

    ``pulse_start_offset`` defaults to centering the pulse in its period,
    which leaves equal room for the averaging spans on either side.
    """

    mean_photons: float
    n_pulses: int
    pulse_period: float = 1.0
    pulse_width: float = 0.010
    pulse_start_offset: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.mean_photons) or self.mean_photons < 0:
            raise ValueError("mean_photons must be finite and >= 0")
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 0:
            raise ValueError("n_pulses must be a non-negative integer")
        if not 0.0 < self.pulse_width < self.pulse_period:
            raise ValueError("need 0 < pulse_width < pulse_period")
        if self.pulse_start_offset is None:
            object.__setattr__(
                self, "pulse_start_offset", 0.5 * (self.pulse_period - self.pulse_width)
            )
        off = self.pulse_start_offset
        if not (0.0 <= off and off + self.pulse_width <= self.pulse_period):
            raise ValueError("pulse must fit inside its period")

    @property
    def duration(self) -> float:
        """Trace length: offset to the first pulse plus one period per pulse."""
        return self.pulse_start_offset + self.n_pulses * self.pulse_period

    def pulse_starts(self) -> np.ndarray:
        return self.pulse_start_offset + self.pulse_period * np.arange(self.n_pulses)


@dataclass(frozen=True)
class RtsParams:
    """Two-level random telegraph switching, off by default."""

    amplitude: float = 0.0
    rate_up: float = 0.0
    rate_down: float = 0.0
    enabled: bool = False

    def __post_init__(self):
        for name in ("amplitude", "rate_up", "rate_down"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0")


@dataclass
class Trace:
    """Uniformly sampled output voltage.

    ``pulse_carriers`` and ``dark_arrival_times`` hold the simulation ground
    truth when the trace was synthesized; they are ``None`` for external data.
    """

    sample_rate: float
    samples: np.ndarray
    reset_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    schedule: PulseSchedule | None = None
    seed: int | None = None
    pulse_carriers: np.ndarray | None = None
    dark_arrival_times: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.reset_indices = np.asarray(self.reset_indices, dtype=np.int64).reshape(-1)
        if not (math.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise ValueError("sample_rate must be positive")
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        r = self.reset_indices
        if r.size:
            if np.any(np.diff(r) <= 0):
                raise ValueError("reset_indices must be strictly increasing")
            if r[0] < 0 or r[-1] >= self.samples.size:
                raise ValueError("reset_indices out of bounds")

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate


def generate_photon_counts(mean_photons: float, n_pulses: int, seed) -> np.ndarray:
    """Photon number per pulse for a coherent source: i.i.d. Poisson draws."""
    if not math.isfinite(mean_photons) or mean_photons < 0:
        raise ValueError("mean_photons must be finite and >= 0")
    if n_pulses < 0:
        raise ValueError("n_pulses must be >= 0")
    return _rng(seed).poisson(mean_photons, size=int(n_pulses)).astype(np.int64)


def thin_to_carriers(photons, qe: float, seed):
    """Binomial thinning of photon counts by the quantum efficiency."""
    if not (0.0 <= qe <= 1.0):
        raise ValueError("qe must lie in [0, 1]")
    photons = np.asarray(photons)
    if np.any(photons < 0):
        raise ValueError("photon counts must be non-negative")
    carriers = _rng(seed).binomial(photons.astype(np.int64), qe)
    if photons.ndim == 0:
        return int(carriers)
    return np.asarray(carriers, dtype=np.int64)


def generate_dark_carriers(rate: float, duration: float, seed) -> np.ndarray:
    """Sorted arrival times of a homogeneous Poisson process on [0, duration)."""
    if not math.isfinite(rate) or rate < 0:
        raise ValueError("rate must be finite and >= 0")
    if not math.isfinite(duration) or duration < 0:
        raise ValueError("duration must be finite and >= 0")
    rng = _rng(seed)
    n = rng.poisson(rate * duration)
    return np.sort(rng.uniform(0.0, duration, size=n))


def fast_length(n: int) -> int:
    """Smallest integer >= n whose only prime factors are 2, 3 and 5."""
    best = 1 << max(int(n - 1).bit_length(), 0)
    p5 = 1
    while p5 < best:
        p35 = p5
        while p35 < best:
            q = -(-n // p35)  # ceil
            p2 = 1 << max(int(q - 1).bit_length(), 0)
            best = min(best, p2 * p35)
            p35 *= 3
        p5 *= 5
    return best


def synthesize_flicker_noise(
    spec: NoiseSpectrum, sample_rate: float, n_samples: int, seed
) -> np.ndarray:
    """Gaussian noise with one-sided power density ``spectral_density(spec, f)``.

    Built in the frequency domain: each positive-frequency bin gets a complex
    Gaussian amplitude with ``E|X_k|^2 = S(f_k) * n * fs / 2``, the DC bin is
    zero, and the inverse real FFT gives a real, zero-mean sequence. When
    ``n_samples`` has no prime factor above 5 the result is exactly periodic
    in ``n_samples``; otherwise a longer record is synthesized and truncated.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if not (math.isfinite(sample_rate) and sample_rate > 0):
        raise ValueError("sample_rate must be positive")
    n = int(n_samples)
    if spec.is_zero:
        return np.zeros(n)
    rng = _rng(seed)
    # Shape on a 5-smooth length so the FFT stays fast, then truncate.
    m = fast_length(n)
    f = rfftfreq(m, d=1.0 / sample_rate)
    density = np.zeros_like(f)
    density[1:] = spec.amplitude_1hz**2 * f[1:] ** (-spec.flicker_exponent) + spec.white_floor**2
    scale = np.sqrt(density * m * sample_rate / 2.0)
    re = rng.standard_normal(f.size)
    im = rng.standard_normal(f.size)
    spectrum = scale * (re + 1j * im) / math.sqrt(2.0)
    if m % 2 == 0:
        # Nyquist bin is real and carries the full bin variance.
        spectrum[-1] = scale[-1] * re[-1]
    return irfft(spectrum, n=m)[:n]


def rts_transitions(params: RtsParams, duration: float, seed):
    """Continuous-time switching history of the two-state chain.

    Returns ``(times, states)``: ``states[i]`` (0 low, 1 high) holds from
    ``times[i]`` until ``times[i + 1]``; ``times[0] == 0``. The initial state
    is drawn from the stationary distribution.
    """
    rng = _rng(seed)
    up, down = params.rate_up, params.rate_down
    p_high = up / (up + down) if up + down > 0 else 0.0
    state = int(rng.random() < p_high)
    times, states = [0.0], [state]
    t = 0.0
    while True:
        rate = down if state else up
        if rate <= 0:
            break
        t += rng.exponential(1.0 / rate)
        if t >= duration:
            break
        state ^= 1
        times.append(t)
        states.append(state)
    return np.array(times), np.array(states, dtype=np.int8)


def synthesize_rts(params: RtsParams, sample_rate: float, n_samples: int, seed) -> np.ndarray:
    """Telegraph signal ``{0, amplitude}`` sampled at ``t_j = j / sample_rate``."""
    n = int(n_samples)
    if not params.enabled or params.amplitude == 0 or n == 0:
        return np.zeros(n)
    times, states = rts_transitions(params, n / sample_rate, seed)
    t = np.arange(n) / sample_rate
    idx = np.searchsorted(times, t, side="right") - 1
    return params.amplitude * states[idx].astype(float)


def reset_indices_for(n_samples: int, sample_rate: float, reset_period: float | None) -> np.ndarray:
    """Sample indices of resets at ``t = k * reset_period``, ``k >= 1``."""
    if reset_period is None or not math.isfinite(reset_period):
        return np.zeros(0, dtype=np.int64)
    step = reset_period * sample_rate
    k = np.arange(1, int(n_samples / step) + 2)
    idx = np.ceil(k * step - _EDGE_EPS * step).astype(np.int64)
    return idx[idx < n_samples]


def first_sample_at(times, sample_rate: float) -> np.ndarray:
    """Index of the first grid sample ``j / sample_rate`` not before each time."""
    x = np.asarray(times, dtype=float) * sample_rate
    return np.ceil(x - _EDGE_EPS * np.maximum(np.abs(x), 1.0)).astype(np.int64)


def carrier_signal(
    n_samples: int,
    sample_rate: float,
    schedule: PulseSchedule | None,
    pulse_carriers,
    dark_times,
    reset_indices,
) -> np.ndarray:
    """Integrated carrier count at each sample time, in electrons.

    Pulse carriers ramp in linearly over the pulse width; dark carriers are
    unit steps. Outside pulses the values are exact integers.
    """
    # Whole carriers enter as integer steps at the first sample at or after
    # their arrival; an integer cumsum keeps plateau values exact.
    steps = np.zeros(n_samples + 1, dtype=np.int64)
    ramp = None
    if schedule is not None and schedule.n_pulses:
        n = np.asarray(pulse_carriers, dtype=np.int64)
        starts = schedule.pulse_starts()
        i_start = first_sample_at(starts, sample_rate)
        i_end = first_sample_at(starts + schedule.pulse_width, sample_rate)
        np.add.at(steps, np.minimum(i_end, n_samples), n)
        # Partial charge for samples inside a pulse: [i_start, i_end).
        width = int((i_end - i_start).max())
        j = i_start[:, None] + np.arange(width)[None, :]
        inside = (j < i_end[:, None]) & (j < n_samples)
        frac = (j / sample_rate - starts[:, None]) / schedule.pulse_width
        ramp = (j[inside], (n[:, None] * np.clip(frac, 0.0, 1.0))[inside])
    if dark_times is not None and len(dark_times):
        idx = first_sample_at(np.asarray(dark_times), sample_rate)
        np.add.at(steps, np.minimum(idx, n_samples), 1)
    total = np.cumsum(steps[:n_samples]).astype(float)
    if ramp is not None:
        total[ramp[0]] += ramp[1]
    # Charge arriving up to a reset sample is discarded at that sample.
    resets = np.asarray(reset_indices, dtype=np.int64)
    if resets.size:
        bounds = np.concatenate([[0], resets, [n_samples]])
        levels = np.concatenate([[0.0], total[resets]])
        total = total - np.repeat(levels, np.diff(bounds))
    return total


def synthesize_trace(
    det: DetectorParams,
    schedule: PulseSchedule,
    spec: NoiseSpectrum,
    rts: RtsParams = RtsParams(),
    sample_rate: float = 1000.0,
    reset_period: float | None = None,
    seed: int = 0,
    photon_counts=None,
) -> Trace:
    """Simulate the output staircase for a pulse train.

    ``photon_counts`` overrides the Poisson photon draw (used to force exact
    carrier numbers, e.g. with ``quantum_efficiency = 1``).
    ``reset_period=None`` disables resets.
    """
    if sample_rate < 2.0 / schedule.pulse_width * (1 - 1e-12):
        raise ValueError("sample_rate must be >= 2/pulse_width to resolve a pulse")
    if reset_period is not None:
        if reset_period < schedule.pulse_period * (1 - 1e-12):
            raise ValueError("reset_period must be >= pulse_period")
        _check_reset_alignment(schedule, reset_period)

    seeds = dict(zip(_STREAMS, np.random.SeedSequence(seed).spawn(len(_STREAMS))))
    n_samples = int(round(schedule.duration * sample_rate))
    if n_samples < 2:
        raise ValueError("trace too short")

    if photon_counts is None:
        photons = generate_photon_counts(schedule.mean_photons, schedule.n_pulses, seeds["photons"])
    else:
        photons = np.asarray(photon_counts, dtype=np.int64)
        if photons.shape != (schedule.n_pulses,):
            raise ValueError("photon_counts must have one entry per pulse")
    carriers = np.atleast_1d(thin_to_carriers(photons, det.quantum_efficiency, seeds["thinning"]))
    dark = generate_dark_carriers(det.dark_rate, n_samples / sample_rate, seeds["dark"])
    resets = reset_indices_for(n_samples, sample_rate, reset_period)

    charge = carrier_signal(n_samples, sample_rate, schedule, carriers, dark, resets)
    volts = charge * signal_per_carrier(det)
    if not spec.is_zero:
        volts = volts + synthesize_flicker_noise(spec, sample_rate, n_samples, seeds["noise"])
    if rts.enabled and rts.amplitude > 0:
        volts = volts + synthesize_rts(rts, sample_rate, n_samples, seeds["rts"])

    return Trace(
        sample_rate=float(sample_rate),
        samples=volts,
        reset_indices=resets,
        schedule=schedule,
        seed=int(seed),
        pulse_carriers=carriers,
        dark_arrival_times=dark,
    )


def _check_reset_alignment(schedule: PulseSchedule, reset_period: float):
    """Reject reset times that would land inside a light pulse."""
    if schedule.n_pulses == 0 or not math.isfinite(reset_period):
        return
    k = np.arange(1, int(schedule.duration / reset_period) + 1)
    phase = np.mod(k * reset_period - schedule.pulse_start_offset, schedule.pulse_period)
    eps = _EDGE_EPS * schedule.pulse_period
    if np.any((phase > eps) & (phase < schedule.pulse_width - eps)):
        raise ValueError("reset_period places a reset inside a light pulse")
