import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cipd.noise_model import DetectorParams, NoiseSpectrum, signal_per_carrier, spectral_density
from cipd.signal_sim import (
    PulseSchedule,
    RtsParams,
    Trace,
    carrier_signal,
    fast_length,
    generate_dark_carriers,
    generate_photon_counts,
    reset_indices_for,
    rts_transitions,
    synthesize_flicker_noise,
    synthesize_rts,
    synthesize_trace,
    thin_to_carriers,
)

QUIET = NoiseSpectrum(0.0, 1.0, 0.0)
IDEAL = DetectorParams(quantum_efficiency=1.0, dark_rate=0.0)


def periodogram(x, fs):
    n = x.size
    X = np.fft.rfft(x)
    p = 2.0 * np.abs(X) ** 2 / (n * fs)
    return np.fft.rfftfreq(n, 1 / fs), p


# -- photon and carrier statistics -----------------------------------------

def test_photon_counts_zero_mean():
    assert not generate_photon_counts(0.0, 100, seed=5).any()


def test_photon_counts_mean():
    x = generate_photon_counts(2.60, 744, seed=11)
    assert x.size == 744
    assert abs(x.mean() - 2.60) <= 3 * math.sqrt(2.60 / 744)


def test_photon_counts_deterministic():
    np.testing.assert_array_equal(generate_photon_counts(4.0, 50, 9), generate_photon_counts(4.0, 50, 9))


def test_photon_counts_reject_negative():
    with pytest.raises(ValueError):
        generate_photon_counts(-1.0, 3, 0)


@given(st.integers(0, 1000), st.integers(0, 2**32 - 1))
def test_thinning_limits(n, seed):
    assert thin_to_carriers(n, 1.0, seed) == n
    assert thin_to_carriers(n, 0.0, seed) == 0
    assert 0 <= thin_to_carriers(n, 0.5, seed) <= n


def test_thinning_binomial_mean():
    carriers = thin_to_carriers(np.full(10**5, 10), 0.8, seed=2)
    assert abs(carriers.mean() - 8.0) <= 3 * math.sqrt(10 * 0.8 * 0.2 / 10**5)


def test_thinning_rejects_bad_qe():
    with pytest.raises(ValueError):
        thin_to_carriers(3, 1.2, 0)


def test_dark_carriers_hour():
    t = generate_dark_carriers(500 / 3600, 3600.0, seed=4)
    assert abs(t.size - 500) <= 3 * math.sqrt(500)
    assert np.all(np.diff(t) >= 0) and t.min() >= 0 and t.max() < 3600


def test_dark_carriers_empty_and_deterministic():
    assert generate_dark_carriers(1e3, 0.0, seed=1).size == 0
    np.testing.assert_array_equal(generate_dark_carriers(2.0, 10.0, 3), generate_dark_carriers(2.0, 10.0, 3))


# -- noise synthesis --------------------------------------------------------

def test_fast_length():
    assert [fast_length(n) for n in (1, 7, 11, 16384, 796495)] == [1, 8, 12, 16384, 800000]


def test_flicker_zero_spectrum():
    assert not synthesize_flicker_noise(QUIET, 1000.0, 256, seed=0).any()


def test_flicker_deterministic_and_zero_mean():
    a = synthesize_flicker_noise(NoiseSpectrum(), 1000.0, 4096, seed=7)
    b = synthesize_flicker_noise(NoiseSpectrum(), 1000.0, 4096, seed=7)
    np.testing.assert_array_equal(a, b)
    assert abs(a.mean()) < 1e-20


def test_white_noise_variance():
    W, fs, n = 1e-8, 1000.0, 2**14
    var = np.mean([synthesize_flicker_noise(NoiseSpectrum(0.0, 1.0, W), fs, n, s).var()
                   for s in range(100)])
    assert var == pytest.approx(W**2 * fs / 2, rel=0.05)


def test_flicker_periodogram_slope():
    spec, fs, n = NoiseSpectrum(), 1000.0, 2**14
    f, p = periodogram(synthesize_flicker_noise(spec, fs, n, 0), fs)
    for s in range(1, 100):
        p += periodogram(synthesize_flicker_noise(spec, fs, n, s), fs)[1]
    band = (f >= 0.1) & (f <= 10)
    slope = np.polyfit(np.log(f[band]), np.log(p[band] / 100), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.1)


@pytest.mark.parametrize("spec", [NoiseSpectrum(), NoiseSpectrum(470e-9, 1.5, 3e-8)])
def test_ensemble_periodogram_matches_density(spec):
    fs, n = 1000.0, 2**12
    f, p = periodogram(synthesize_flicker_noise(spec, fs, n, 0), fs)
    for s in range(1, 100):
        p += periodogram(synthesize_flicker_noise(spec, fs, n, s), fs)[1]
    p /= 100
    # Octave bands over [fs/n, fs/4].
    lo = fs / n
    while lo * 2 <= fs / 4:
        band = (f >= lo) & (f < 2 * lo)
        ratio = p[band].mean() / spectral_density(spec, f[band]).mean()
        assert abs(math.log(ratio)) < math.log(1.10), (lo, ratio)
        lo *= 2


# -- telegraph noise --------------------------------------------------------

def test_rts_disabled_or_flat():
    assert not synthesize_rts(RtsParams(1e-6, 1, 1, enabled=False), 100.0, 500, 0).any()
    assert not synthesize_rts(RtsParams(0.0, 1, 1, enabled=True), 100.0, 500, 0).any()


def test_rts_levels_and_balance():
    x = synthesize_rts(RtsParams(2e-6, 5.0, 5.0, True), 1000.0, 10**6, seed=3)
    assert set(np.unique(x)) <= {0.0, 2e-6}
    # ~5000 dwells each, so the fraction is tight around 1/2.
    assert np.mean(x > 0) == pytest.approx(0.5, abs=0.03)


def test_rts_dwell_times():
    up, down = 2.0, 0.5
    times, states = rts_transitions(RtsParams(1.0, up, down, True), 20000.0, seed=8)
    dwell = np.diff(times)
    low, high = dwell[states[:-1] == 0], dwell[states[:-1] == 1]
    for d, rate in ((low, up), (high, down)):
        se = (1 / rate) / math.sqrt(d.size)
        assert abs(d.mean() - 1 / rate) <= 3 * se


# -- traces -----------------------------------------------------------------

def test_schedule_invariants():
    with pytest.raises(ValueError):
        PulseSchedule(-1.0, 3)
    with pytest.raises(ValueError):
        PulseSchedule(1.0, 3, pulse_period=1.0, pulse_width=1.0)
    with pytest.raises(ValueError):
        PulseSchedule(1.0, 3, pulse_start_offset=0.995)
    assert PulseSchedule(1.0, 3).pulse_start_offset == pytest.approx(0.495)


def test_trace_invariants():
    with pytest.raises(ValueError):
        Trace(0.0, np.zeros(3))
    with pytest.raises(ValueError):
        Trace(1.0, np.zeros(3), reset_indices=[2, 1])
    with pytest.raises(ValueError):
        Trace(1.0, np.zeros(3), reset_indices=[3])


def test_noiseless_single_pulse_exact():
    tr = synthesize_trace(IDEAL, PulseSchedule(0.0, 1), QUIET, photon_counts=[7], seed=1)
    assert tr.samples[-1] - tr.samples[0] == 7 * signal_per_carrier(IDEAL)


def test_noiseless_staircase_levels():
    sched = PulseSchedule(0.0, 4)
    tr = synthesize_trace(IDEAL, sched, QUIET, photon_counts=[3, 0, 5, 1], seed=0)
    q = signal_per_carrier(IDEAL)
    e = tr.samples / q
    # Plateau just before each pulse and at the end.
    idx = [int(round(t * 1000)) - 1 for t in sched.pulse_starts()] + [len(tr) - 1]
    np.testing.assert_allclose(e[idx], [0, 3, 3, 8, 9], atol=1e-9)


def test_reset_every_pulse_returns_to_baseline():
    sched = PulseSchedule(5.0, 6)
    tr = synthesize_trace(IDEAL, sched, QUIET, reset_period=1.0, seed=2)
    assert tr.reset_indices.tolist() == [1000, 2000, 3000, 4000, 5000, 6000]
    assert np.all(tr.samples[tr.reset_indices] == 0.0)


def test_noiseless_nondecreasing_between_resets():
    det = DetectorParams(dark_rate=2.0)
    tr = synthesize_trace(det, PulseSchedule(4.0, 20), QUIET, reset_period=5.0, seed=3)
    bounds = [0, *tr.reset_indices.tolist(), len(tr)]
    for a, b in zip(bounds[:-1], bounds[1:]):
        assert np.all(np.diff(tr.samples[a:b]) >= 0)


def test_trace_bit_reproducible():
    args = (DetectorParams(), PulseSchedule(6.0, 10), NoiseSpectrum(470e-9, 1.0, 1e-8),
            RtsParams(1e-6, 0.3, 0.3, True))
    a = synthesize_trace(*args, reset_period=5.0, seed=42)
    b = synthesize_trace(*args, reset_period=5.0, seed=42)
    assert a.samples.tobytes() == b.samples.tobytes()
    c = synthesize_trace(*args, reset_period=5.0, seed=43)
    assert a.samples.tobytes() != c.samples.tobytes()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 30.0), st.floats(0.0, 3.0))
def test_charge_conservation(seed, mean, dark):
    det = DetectorParams(dark_rate=dark)
    sched = PulseSchedule(mean, 8)
    tr = synthesize_trace(det, sched, QUIET, seed=seed, sample_rate=200.0)
    injected = int(tr.pulse_carriers.sum()) + tr.dark_arrival_times.size
    # No resets: the last sample holds every carrier except dark arrivals
    # after the final sample time.
    late = int(np.sum(tr.dark_arrival_times > (len(tr) - 1) / tr.sample_rate))
    final = tr.samples[-1] / signal_per_carrier(det)
    assert final == pytest.approx(injected - late, abs=1e-9)


def test_reference_carrier_mean():
    det = DetectorParams(quantum_efficiency=0.8)
    sched = PulseSchedule(6.97 / 0.8, 796)
    tr = synthesize_trace(det, sched, QUIET, sample_rate=200.0, seed=12)
    assert abs(tr.pulse_carriers.mean() - 6.97) <= 3 * math.sqrt(6.97 / 796)


def test_timing_rejections():
    sched = PulseSchedule(1.0, 3)
    with pytest.raises(ValueError):
        synthesize_trace(IDEAL, sched, QUIET, sample_rate=100.0)
    with pytest.raises(ValueError):
        synthesize_trace(IDEAL, sched, QUIET, reset_period=0.5)
    with pytest.raises(ValueError):
        synthesize_trace(IDEAL, sched, QUIET, reset_period=1.5)  # lands inside a pulse


def test_reset_indices_for():
    assert reset_indices_for(5000, 1000.0, 1.0).tolist() == [1000, 2000, 3000, 4000]
    assert reset_indices_for(5000, 1000.0, None).size == 0


def test_carrier_signal_ramp():
    sched = PulseSchedule(0.0, 1, pulse_period=1.0, pulse_width=0.01, pulse_start_offset=0.5)
    c = carrier_signal(1000, 1000.0, sched, [10], None, [])
    assert c[500] == 0.0
    assert c[505] == pytest.approx(5.0)
    assert c[510] == 10.0
