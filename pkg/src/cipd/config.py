"""Run configuration: one JSON document, one section per parameter group.

Physical keys carry their SI unit in the name (``c_input_farads``,
``f_cutoff_hz``) so a file can't silently mix volts and millivolts.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .noise_model import CdsConfig, DetectorParams, NoiseSpectrum
from .signal_sim import PulseSchedule, RtsParams


class ConfigError(ValueError):
    pass


# section -> {json key: dataclass field}
KEYS = {
    "detector": {
        "gm": "gm",
        "c_input_farads": "c_input",
        "quantum_efficiency": "quantum_efficiency",
        "dark_rate_per_s": "dark_rate",
    },
    "spectrum": {
        "amplitude_1hz_v_per_rthz": "amplitude_1hz",
        "flicker_exponent": "flicker_exponent",
        "white_floor_v_per_rthz": "white_floor",
    },
    "cds": {
        "t_integration_s": "t_integration",
        "pulse_width_s": "pulse_width",
        "f_cutoff_hz": "f_cutoff",
        "t_average_s": "t_average",
    },
    "schedule": {
        "mean_photons": "mean_photons",
        "n_pulses": "n_pulses",
        "pulse_period_s": "pulse_period",
        "pulse_width_s": "pulse_width",
        "pulse_start_offset_s": "pulse_start_offset",
    },
    "rts": {
        "amplitude_v": "amplitude",
        "rate_up_per_s": "rate_up",
        "rate_down_per_s": "rate_down",
        "enabled": "enabled",
    },
    "run": {
        "sample_rate_hz": "sample_rate",
        "reset_period_s": "reset_period",
        "seed": "seed",
        "output_dir": "output_dir",
    },
}

_TYPES = {
    "detector": DetectorParams,
    "spectrum": NoiseSpectrum,
    "cds": CdsConfig,
    "rts": RtsParams,
}


@dataclass(frozen=True)
class RunConfig:
    detector: DetectorParams = field(default_factory=DetectorParams)
    spectrum: NoiseSpectrum = field(default_factory=NoiseSpectrum)
    cds: CdsConfig = field(default_factory=CdsConfig)
    schedule: PulseSchedule = field(default_factory=lambda: PulseSchedule(0.0, 0))
    rts: RtsParams = field(default_factory=RtsParams)
    sample_rate: float = 1000.0
    reset_period: float | None = 60.0
    seed: int | None = None
    output_dir: str = "out"

    def check_timing(self):
        """Schedule and CDS timing must describe the same pulse train."""
        s, c = self.schedule, self.cds
        if abs(s.pulse_period - c.t_integration) > 1e-12 * c.t_integration:
            raise ConfigError("schedule.pulse_period_s must equal cds.t_integration_s")
        if abs(s.pulse_width - c.pulse_width) > 1e-12 * c.pulse_width:
            raise ConfigError("schedule.pulse_width_s must equal cds.pulse_width_s")

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is required (run.seed or --seed)")
        return self.seed

    def to_dict(self) -> dict:
        out = {}
        for section, keys in KEYS.items():
            obj = self if section == "run" else getattr(self, section)
            out[section] = {k: getattr(obj, f) for k, f in keys.items()}
        return out

    def physics_dict(self) -> dict:
        """``to_dict`` without ``output_dir``, which doesn't affect results."""
        out = self.to_dict()
        out["run"] = {k: v for k, v in out["run"].items() if k != "output_dir"}
        return out

    def sha256(self) -> str:
        blob = json.dumps(self.physics_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _section_kwargs(doc: dict, section: str) -> dict:
    raw = doc.get(section, {})
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section {section!r} must be an object")
    keys = KEYS[section]
    unknown = set(raw) - set(keys)
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    return {keys[k]: v for k, v in raw.items()}


def _build(section, cls, kwargs):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - set(KEYS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    parts = {name: _build(name, cls, _section_kwargs(doc, name)) for name, cls in _TYPES.items()}
    cds = parts["cds"]
    sched_kw = _section_kwargs(doc, "schedule")
    sched_kw.setdefault("mean_photons", 0.0)
    sched_kw.setdefault("n_pulses", 0)
    sched_kw.setdefault("pulse_period", cds.t_integration)
    sched_kw.setdefault("pulse_width", cds.pulse_width)
    parts["schedule"] = _build("schedule", PulseSchedule, sched_kw)

    run = _section_kwargs(doc, "run")
    cfg = RunConfig(**parts, **run)
    if not (_is_number(cfg.sample_rate) and cfg.sample_rate > 0):
        raise ConfigError("run: sample_rate_hz must be positive")
    if cfg.reset_period is not None and not (_is_number(cfg.reset_period) and cfg.reset_period > 0):
        raise ConfigError("run: reset_period_s must be positive or null")
    if not isinstance(cfg.output_dir, str):
        raise ConfigError("run: output_dir must be a string")
    if cfg.seed is not None and (isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int)):
        raise ConfigError("run: seed must be an integer")
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} col {exc.colno}: {exc.msg}") from None
    return config_from_dict(doc)


# Scalars that a sweep may vary: short name -> (section, field).
SWEEPABLE = {}
for _section in ("detector", "spectrum", "cds"):
    for _key, _field in KEYS[_section].items():
        if _field in ("quantum_efficiency", "dark_rate"):
            continue
        SWEEPABLE[_key] = (_section, _field)
        SWEEPABLE[_field] = (_section, _field)


def with_value(cfg: RunConfig, name: str, value: float) -> RunConfig:
    """Copy of ``cfg`` with one sweepable scalar replaced."""
    if name not in SWEEPABLE:
        raise ConfigError(f"unknown sweep parameter {name!r}; choose from {sorted(SWEEPABLE)}")
    section, fld = SWEEPABLE[name]
    try:
        part = replace(getattr(cfg, section), **{fld: value})
    except ValueError as exc:
        raise ConfigError(f"{name}={value}: {exc}") from None
    return replace(cfg, **{section: part})
