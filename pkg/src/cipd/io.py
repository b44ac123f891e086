"""File formats for traces, readouts and fit reports.

Floats are written with ``repr`` (shortest round-trip form), so CSV and JSON
both reproduce every sample bit for bit.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .readout import ReadoutResult
from .signal_sim import PulseSchedule, Trace
from .statistics import Histogram, PoissonFit

TRACE_COLUMNS = ["time_s", "volts"]
READOUT_COLUMNS = ["window_index", "raw_electrons", "count", "flag"]
HISTOGRAM_COLUMNS = ["k", "occurrences"]


class SchemaError(ValueError):
    """Input file does not have the expected columns or fields."""


def atomic_write_text(path, text: str) -> None:
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _f(x) -> str:
    return repr(float(x))


# -- traces -----------------------------------------------------------------

def trace_to_csv(trace: Trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    t = trace.times
    for ti, vi in zip(t.tolist(), trace.samples.tolist()):
        w.writerow([repr(ti), repr(vi)])
    return buf.getvalue()


def _infer_sample_rate(t: np.ndarray) -> float:
    if t.size < 2:
        raise SchemaError("trace CSV needs at least two samples")
    if t[0] != 0.0:
        raise SchemaError("time_s must start at 0")
    guess = (t.size - 1) / t[-1]
    for digits in (12, 10, 8):
        fs = float(f"{guess:.{digits}g}")
        if np.array_equal(np.arange(t.size) / fs, t):
            return fs
    if np.allclose(np.arange(t.size) / guess, t, rtol=1e-9, atol=0):
        return float(guess)
    raise SchemaError("time_s is not uniformly sampled")


def trace_from_csv(
    text: str,
    sample_rate: float | None = None,
    reset_indices=None,
    schedule: PulseSchedule | None = None,
) -> Trace:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise SchemaError("empty trace CSV")
    header = [h.strip() for h in rows[0]]
    if header != TRACE_COLUMNS:
        raise SchemaError(f"trace CSV columns {header!r}, expected {TRACE_COLUMNS!r}")
    try:
        data = np.array([[float(a), float(b)] for a, b in rows[1:]], dtype=float)
    except ValueError as exc:
        raise SchemaError(f"trace CSV has a malformed row: {exc}") from None
    if data.size == 0:
        raise SchemaError("trace CSV has no samples")
    t, v = data[:, 0], data[:, 1]
    fs = sample_rate if sample_rate is not None else _infer_sample_rate(t)
    return Trace(
        sample_rate=fs,
        samples=v,
        reset_indices=[] if reset_indices is None else reset_indices,
        schedule=schedule,
    )


def schedule_to_dict(s: PulseSchedule | None):
    return None if s is None else dataclasses.asdict(s)


def trace_to_dict(trace: Trace) -> dict:
    return {
        "sample_rate_hz": float(trace.sample_rate),
        "seed": trace.seed,
        "n_samples": len(trace),
        "reset_indices": trace.reset_indices.tolist(),
        "schedule": schedule_to_dict(trace.schedule),
        "pulse_carriers": None if trace.pulse_carriers is None else trace.pulse_carriers.tolist(),
        "dark_arrival_times_s": (
            None if trace.dark_arrival_times is None else trace.dark_arrival_times.tolist()
        ),
        "samples_v": trace.samples.tolist(),
    }


_TRACE_KEYS = {"sample_rate_hz", "samples_v", "reset_indices"}


def trace_from_dict(d: dict) -> Trace:
    missing = _TRACE_KEYS - d.keys()
    if missing:
        raise SchemaError(f"trace JSON missing fields {sorted(missing)}")
    sched = d.get("schedule")
    carriers = d.get("pulse_carriers")
    dark = d.get("dark_arrival_times_s")
    return Trace(
        sample_rate=d["sample_rate_hz"],
        samples=np.array(d["samples_v"], dtype=float),
        reset_indices=d["reset_indices"],
        schedule=None if sched is None else PulseSchedule(**sched),
        seed=d.get("seed"),
        pulse_carriers=None if carriers is None else np.array(carriers, dtype=np.int64),
        dark_arrival_times=None if dark is None else np.array(dark, dtype=float),
    )


def trace_to_json(trace: Trace) -> str:
    return json.dumps(trace_to_dict(trace))


def trace_from_json(text: str) -> Trace:
    return trace_from_dict(json.loads(text))


def load_trace(path, sample_rate=None, reset_indices=None, schedule=None) -> Trace:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            return trace_from_json(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return trace_from_csv(text, sample_rate, reset_indices, schedule)


# -- readout and fits -------------------------------------------------------

def readout_to_csv(result: ReadoutResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(READOUT_COLUMNS)
    for i, (r, c, f) in enumerate(zip(result.raw_electrons, result.counts, result.flags)):
        w.writerow([i, _f(r), int(c), f])
    return buf.getvalue()


def readout_to_dict(result: ReadoutResult) -> dict:
    return {
        "raw_electrons": [float(x) for x in result.raw_electrons],
        "counts": [int(c) for c in result.counts],
        "flags": list(result.flags),
        "windows": [dataclasses.asdict(w) for w in result.windows],
    }


def histogram_to_csv(hist: Histogram) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTOGRAM_COLUMNS)
    for k, c in enumerate(hist.dense().tolist()):
        w.writerow([k, c])
    return buf.getvalue()


def fit_to_dict(fit: PoissonFit, hist: Histogram) -> dict:
    return {
        "lambda_hat": fit.lambda_hat,
        "std_error": fit.std_error,
        "chi_square": fit.chi_square,
        "dof": fit.dof,
        "p_value": fit.p_value,
        "n_samples": fit.n_samples,
        "histogram": {str(k): v for k, v in hist.counts_by_k.items()},
    }
