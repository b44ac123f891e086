"""Simulate-then-analyze orchestration shared by the CLI and the test suite."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import RunConfig
from .noise_model import (
    CdsConfig,
    DetectorParams,
    cds_noise_integral,
    resolution_electrons,
    signal_per_carrier,
)
from .readout import FLAG_NONFINITE, ReadoutResult, read_out
from .signal_sim import Trace, synthesize_trace
from .statistics import (
    Estimate,
    Histogram,
    PoissonFit,
    build_histogram,
    estimate_dark_rate,
    estimate_qe,
    fit_poisson,
)

# Measured carrier mean and number of pulses of the five reference
# photon-number histograms.
REFERENCE_RUNS = (
    (2.60, 744),
    (4.14, 569),
    (6.97, 796),
    (9.89, 800),
    (22.27, 399),
)


def noise_budget(cfg: RunConfig, rel_tol: float = 1e-6) -> dict:
    integral = cds_noise_integral(cfg.spectrum, cfg.cds, rel_tol=rel_tol)
    v_step = signal_per_carrier(cfg.detector)
    return {
        "cds_noise_voltage_v": integral.rms,
        "signal_per_carrier_v": v_step,
        "resolution_electrons": integral.rms / v_step,
        "quadrature_abs_error_v2": integral.quad_error,
        "tail_bound_v2": integral.tail_bound,
        "f_max_hz": integral.f_max,
        "t_average_s": cfg.cds.averaging_time,
        "parameters": cfg.to_dict(),
    }


def dark_carriers_per_window(det: DetectorParams, cds: CdsConfig) -> float:
    """Mean dark contribution to one CDS reading.

    With both spans ``T0`` long the two span centroids are ``T`` apart, so a
    reading picks up ``dark_rate * T`` carriers on average.
    """
    return det.dark_rate * cds.t_integration


def incident_mean_for(measured_mean: float, det: DetectorParams, cds: CdsConfig) -> float:
    """Incident photons per pulse that give ``measured_mean`` carriers per reading."""
    if det.quantum_efficiency == 0:
        raise ValueError("quantum_efficiency is zero")
    photo = measured_mean - dark_carriers_per_window(det, cds)
    if photo < 0:
        raise ValueError("target mean is below the dark contribution")
    return photo / det.quantum_efficiency


def simulate(cfg: RunConfig, seed: int | None = None, photon_counts=None) -> Trace:
    cfg.check_timing()
    seed = cfg.require_seed() if seed is None else seed
    return synthesize_trace(
        cfg.detector,
        cfg.schedule,
        cfg.spectrum,
        cfg.rts,
        sample_rate=cfg.sample_rate,
        reset_period=cfg.reset_period,
        seed=seed,
        photon_counts=photon_counts,
    )


@dataclass
class Analysis:
    readout: ReadoutResult
    histogram: Histogram
    fit: PoissonFit
    qe: Estimate | None = None
    dark_rate: Estimate | None = None
    sample_rate: float | None = None

    def report(self) -> dict:
        out = {
            "lambda_hat": self.fit.lambda_hat,
            "std_error": self.fit.std_error,
            "chi_square": self.fit.chi_square,
            "dof": self.fit.dof,
            "p_value": self.fit.p_value,
            "n_samples": self.fit.n_samples,
            "histogram": {str(k): v for k, v in self.histogram.counts_by_k.items()},
            "n_windows": int(len(self.readout.counts)),
            "n_flagged": int(sum(1 for f in self.readout.flags if f)),
        }
        windows = self.readout.windows
        if windows and self.sample_rate:
            # Registration of an unclipped window; windows at resets are shorter.
            fs = self.sample_rate
            full_b = max(w.baseline_span for w in windows)
            full_s = max(w.signal_span for w in windows)
            out["cds_window"] = {
                "baseline_s": full_b / fs,
                "gap_s": max(w.gap for w in windows) / fs,
                "signal_s": full_s / fs,
                "n_clipped": sum(w.baseline_span < full_b or w.signal_span < full_s for w in windows),
            }
        if self.qe is not None:
            out["quantum_efficiency"] = {"value": self.qe.value, "std_error": self.qe.std_error}
        if self.dark_rate is not None:
            out["dark_rate_per_s"] = {
                "value": self.dark_rate.value,
                "std_error": self.dark_rate.std_error,
                "per_hour": self.dark_rate.value * 3600.0,
            }
        return out


def analyze(
    trace: Trace,
    det: DetectorParams,
    cds: CdsConfig,
    incident_mean: float | None = None,
) -> Analysis:
    """Readout, histogram and Poisson fit of one trace.

    QE is back-calculated when ``incident_mean > 0``: the configured dark
    contribution per reading is removed from the fitted mean first. For a
    dark run (``incident_mean == 0``) the dark rate is estimated from the
    summed signed CDS readings, which telescope to the total accumulated
    charge and are free of per-window rounding.
    """
    result = read_out(trace, det, cds)
    ok = np.array([f != FLAG_NONFINITE for f in result.flags], dtype=bool)
    hist = build_histogram(result.counts[ok])
    fit = fit_poisson(hist)
    analysis = Analysis(result, hist, fit, sample_rate=trace.sample_rate)
    # Windows clipped at resets see dark charge for less than T.
    exposure = np.mean([w.lever for w, good in zip(result.windows, ok) if good]) / trace.sample_rate
    if incident_mean is not None and incident_mean > 0:
        photo = max(fit.lambda_hat - det.dark_rate * exposure, 0.0)
        analysis.qe = estimate_qe(photo, incident_mean, fit.std_error)
    elif incident_mean == 0:
        analysis.dark_rate = estimate_dark_rate(result.raw_electrons[ok], exposure)
    return analysis


def reference_config(
    measured_mean: float,
    n_pulses: int,
    base: RunConfig | None = None,
) -> RunConfig:
    """Config reproducing one reference histogram: incident mean set so the
    expected reading (photo plus dark carriers) equals ``measured_mean``."""
    base = base if base is not None else RunConfig()
    incident = incident_mean_for(measured_mean, base.detector, base.cds)
    sched = replace(base.schedule, mean_photons=incident, n_pulses=n_pulses)
    return replace(base, schedule=sched)


def simulate_and_analyze(cfg: RunConfig, seed: int) -> Analysis:
    trace = simulate(cfg, seed=seed)
    return analyze(trace, cfg.detector, cfg.cds, incident_mean=cfg.schedule.mean_photons)


def analytic_resolution(cfg: RunConfig) -> float:
    return resolution_electrons(cfg.detector, cfg.spectrum, cfg.cds)
