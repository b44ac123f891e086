"""CDS readout: per-pulse carrier estimates and staircase step detection.

Each light pulse gets one CDS window: the mean output over a baseline span
just before the pulse is subtracted from the mean over a signal span just
after it. With both spans ``T0`` long, consecutive windows share the plateau
between pulses (the signal span of pulse ``i`` is the baseline span of pulse
``i + 1``), and the reading has exactly the comb-times-sinc transfer function
of the analytic noise model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .noise_model import CdsConfig, DetectorParams, signal_per_carrier
from .signal_sim import PulseSchedule, Trace, first_sample_at

FLAG_OK = ""
FLAG_NONFINITE = "nonfinite"
FLAG_LEVEL_SHIFT = "level_shift"
FLAG_SHORT_SPAN = "short_span"


@dataclass(frozen=True)
class CdsWindow:
    """Baseline ``[start, start+baseline_span)``, then ``gap`` skipped samples
    (the pulse), then signal ``[.., .. + signal_span)``."""

    start_index: int
    baseline_span: int
    signal_span: int
    gap: int = 0

    def __post_init__(self):
        if self.baseline_span <= 0 or self.signal_span <= 0:
            raise ValueError("window spans must be positive")
        if self.gap < 0 or self.start_index < 0:
            raise ValueError("start_index and gap must be non-negative")

    @property
    def baseline(self) -> slice:
        return slice(self.start_index, self.start_index + self.baseline_span)

    @property
    def signal(self) -> slice:
        s = self.start_index + self.baseline_span + self.gap
        return slice(s, s + self.signal_span)

    @property
    def stop_index(self) -> int:
        return self.start_index + self.baseline_span + self.gap + self.signal_span

    @property
    def lever(self) -> float:
        """Samples between the baseline and signal centroids.

        A charge ramp of ``r`` carriers per sample reads ``r * lever``.
        """
        return 0.5 * (self.baseline_span + self.signal_span) + self.gap


@dataclass
class ReadoutResult:
    raw_electrons: np.ndarray
    counts: np.ndarray
    flags: list[str] = field(default_factory=list)
    windows: list[CdsWindow] = field(default_factory=list)

    def __post_init__(self):
        if not (len(self.raw_electrons) == len(self.counts) == len(self.flags)):
            raise ValueError("raw_electrons, counts and flags must have equal length")

    @property
    def valid(self) -> np.ndarray:
        return np.array([f != FLAG_NONFINITE for f in self.flags], dtype=bool)


def segment_by_resets(trace: Trace) -> list[tuple[int, int]]:
    """Half-open ``(start, stop)`` ranges between resets; empty ranges dropped."""
    bounds = [0, *trace.reset_indices.tolist(), len(trace)]
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _segment_of(segments, index: int) -> tuple[int, int]:
    for a, b in segments:
        if a <= index < b:
            return a, b
    raise ValueError(f"index {index} outside trace")


def plan_windows(
    trace: Trace,
    cds: CdsConfig,
    schedule: PulseSchedule | None = None,
    baseline_time: float | None = None,
) -> list[CdsWindow]:
    """One CDS window per scheduled pulse.

    Spans are ``T0`` long by default (``baseline_time`` overrides the
    baseline length) and are clipped at reset boundaries and trace ends.
    """
    schedule = schedule if schedule is not None else trace.schedule
    if schedule is None:
        raise ValueError("no pulse schedule: pass one or use a synthesized trace")
    fs = trace.sample_rate
    t0 = cds.averaging_time
    n_base = int(round((t0 if baseline_time is None else baseline_time) * fs))
    n_sig = int(round(t0 * fs))
    segments = segment_by_resets(trace)
    starts = schedule.pulse_starts()
    first = first_sample_at(starts, fs).tolist()
    last = first_sample_at(starts + schedule.pulse_width, fs).tolist()
    windows = []
    for ps, i_start, i_end in zip(starts, first, last):
        seg_a, seg_b = _segment_of(segments, min(i_start, len(trace) - 1))
        if i_end > seg_b:
            raise ValueError("pulse crosses a reset or the trace end")
        b0 = max(seg_a, i_start - n_base)
        s1 = min(seg_b, i_end + n_sig)
        if i_start - b0 <= 0 or s1 - i_end <= 0:
            raise ValueError(f"no room for a CDS span around pulse at t={ps:g}s")
        windows.append(CdsWindow(b0, i_start - b0, s1 - i_end, i_end - i_start))
    return windows


def _check_window(window: CdsWindow, segments, n: int):
    if window.stop_index > n:
        raise ValueError("window extends past the end of the trace")
    a, b = _segment_of(segments, window.start_index)
    if window.stop_index > b:
        raise ValueError(f"window starting at {window.start_index} crosses a reset")


def cds_estimate(
    trace: Trace,
    det: DetectorParams,
    cds: CdsConfig | None = None,
    windows: Sequence[CdsWindow] | None = None,
) -> np.ndarray:
    """Electron-equivalent CDS reading per window (signed, unrounded)."""
    if windows is None:
        if cds is None:
            raise ValueError("need either windows or a CdsConfig to plan them")
        windows = plan_windows(trace, cds)
    segments = segment_by_resets(trace)
    for w in windows:
        _check_window(w, segments, len(trace))
    if not windows:
        return np.zeros(0)
    base = _span_sums(trace.samples, [w.baseline for w in windows])
    sig = _span_sums(trace.samples, [w.signal for w in windows])
    nb = np.array([w.baseline_span for w in windows], dtype=float)
    ns = np.array([w.signal_span for w in windows], dtype=float)
    return (sig / ns - base / nb) / signal_per_carrier(det)


def quantize_counts(raw) -> np.ndarray:
    """Round half up to the nearest integer, then clip at zero.

    Non-finite input raises; use :func:`read_out` to flag and skip those.
    """
    raw = np.asarray(raw, dtype=float)
    bad = ~np.isfinite(raw)
    if np.any(bad):
        raise ValueError(f"non-finite estimates at windows {np.flatnonzero(bad).tolist()}")
    return np.maximum(np.floor(raw + 0.5), 0).astype(np.int64)


def _span_sums(x: np.ndarray, spans) -> np.ndarray:
    edges = np.array([(sl.start, sl.stop) for sl in spans], dtype=np.intp).reshape(-1)
    return np.add.reduceat(np.append(x, 0.0), edges)[::2]


def _level_shifts(x: np.ndarray, spans: list[slice], q: float, threshold: float) -> np.ndarray:
    """True where the two halves of a span differ by more than ``threshold`` e."""
    lo = np.array([s.start for s in spans])
    hi = np.array([s.stop for s in spans])
    mid = (lo + hi) // 2
    first = [slice(a, m) for a, m in zip(lo, mid)]
    second = [slice(m, b) for m, b in zip(mid, hi)]
    n1 = np.maximum(mid - lo, 1)
    n2 = np.maximum(hi - mid, 1)
    diff = _span_sums(x, second) / n2 - _span_sums(x, first) / n1
    return (np.abs(diff) / q > threshold) & (hi - lo >= 4)


def read_out(
    trace: Trace,
    det: DetectorParams,
    cds: CdsConfig,
    windows: Sequence[CdsWindow] | None = None,
    shift_threshold: float = 1.5,
) -> ReadoutResult:
    """CDS estimates, integer counts and per-window flags.

    A window is flagged ``level_shift`` when either span's two halves differ
    by more than ``shift_threshold`` electrons, the signature of a telegraph
    jump inside an averaging span. Non-finite estimates are flagged and given
    count 0.
    """
    windows = list(windows) if windows is not None else plan_windows(trace, cds)
    raw = cds_estimate(trace, det, cds, windows)
    q = signal_per_carrier(det)
    full = int(round(cds.averaging_time * trace.sample_rate))
    if windows:
        shifted = _level_shifts(trace.samples, [w.baseline for w in windows], q, shift_threshold)
        shifted |= _level_shifts(trace.samples, [w.signal for w in windows], q, shift_threshold)
    else:
        shifted = np.zeros(0, dtype=bool)
    flags = []
    for r, w, shift in zip(raw, windows, shifted):
        if not math.isfinite(r):
            flags.append(FLAG_NONFINITE)
        elif shift:
            flags.append(FLAG_LEVEL_SHIFT)
        elif w.signal_span < full // 4 or w.baseline_span < full // 4:
            flags.append(FLAG_SHORT_SPAN)
        else:
            flags.append(FLAG_OK)
    finite = np.isfinite(raw)
    counts = np.zeros(raw.size, dtype=np.int64)
    counts[finite] = quantize_counts(raw[finite])
    return ReadoutResult(raw, counts, flags, windows)


class Step(NamedTuple):
    index: int
    height: float
    off_schedule: bool


def _split_gain(cs, a, b, min_size):
    """Best single split of x[a:b] by squared-error reduction."""
    ks = np.arange(a + min_size, b - min_size + 1)
    if ks.size == 0:
        return None
    n_l = ks - a
    n_r = b - ks
    s_l = cs[ks] - cs[a]
    s_r = cs[b] - cs[ks]
    total = cs[b] - cs[a]
    gain = s_l**2 / n_l + s_r**2 / n_r - total**2 / (b - a)
    j = int(np.argmax(gain))
    k = int(ks[j])
    return k, s_r[j] / n_r[j] - s_l[j] / n_l[j]


def _binary_segmentation(x: np.ndarray, threshold: float, min_size: int) -> list[int]:
    cs = np.concatenate([[0.0], np.cumsum(x)])
    found = []
    stack = [(0, x.size)]
    while stack:
        a, b = stack.pop()
        split = _split_gain(cs, a, b, min_size)
        if split is None:
            continue
        k, diff = split
        if abs(diff) < threshold:
            continue
        found.append(k)
        stack.append((a, k))
        stack.append((k, b))
    return sorted(found)


def _prune(x: np.ndarray, cps: list[int], min_step: float) -> list[tuple[int, float]]:
    """Drop change points whose median-to-median height is below ``min_step``."""
    cps = list(cps)
    while True:
        bounds = [0, *cps, x.size]
        levels = [float(np.median(x[a:b])) for a, b in zip(bounds[:-1], bounds[1:])]
        heights = np.diff(levels)
        if not cps:
            return []
        j = int(np.argmin(np.abs(heights)))
        if abs(heights[j]) >= min_step:
            return list(zip(cps, heights.tolist()))
        del cps[j]


def extract_staircase(
    trace: Trace,
    det: DetectorParams,
    min_step: float = 1.0,
    min_size: int | None = None,
    schedule: PulseSchedule | None = None,
) -> list[Step]:
    """Detect voltage steps within each reset segment.

    Greedy binary segmentation proposes change points wherever the means on
    either side differ by at least ``min_step / 2`` electrons; a pruning pass
    then keeps only steps whose median-to-median height is at least
    ``min_step``. Medians keep the pulse ramps from biasing the heights.

    A step is ``off_schedule`` when it lies outside every pulse interval
    (padded by one pulse width) of the schedule; with no schedule every step
    is on schedule.
    """
    if min_step <= 0:
        raise ValueError("min_step must be positive")
    schedule = schedule if schedule is not None else trace.schedule
    fs = trace.sample_rate
    if min_size is None:
        min_size = 2
        if schedule is not None:
            min_size = max(2, int(round(schedule.pulse_width * fs)))
    q = signal_per_carrier(det)
    electrons = trace.samples / q

    if schedule is not None and schedule.n_pulses:
        starts = schedule.pulse_starts()
        pad = schedule.pulse_width
        lo = (starts - pad) * fs
        hi = (starts + schedule.pulse_width + pad) * fs

        def off(idx):
            j = np.searchsorted(lo, idx, side="right") - 1
            return not (j >= 0 and idx <= hi[j])
    else:
        def off(idx):
            return False

    steps = []
    for a, b in segment_by_resets(trace):
        seg = electrons[a:b]
        cps = _binary_segmentation(seg, min_step / 2.0, min_size)
        for k, h in _prune(seg, cps, min_step):
            steps.append(Step(a + k, h, off(a + k)))
    return steps
