"""Command-line interface: noise-budget, simulate, analyze, sweep.

Exit codes: 0 success, 2 configuration error, 3 I/O or input-schema error,
4 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import itertools
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import io as cio
from .config import ConfigError, RunConfig, load_config, with_value
from .pipeline import analyze, noise_budget, simulate
from .quadrature import QuadratureError
from .signal_sim import reset_indices_for

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

log = logging.getLogger("cipd")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "out", None):
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_noise_budget(args) -> int:
    cfg = _config(args)
    report = noise_budget(cfg, rel_tol=args.rel_tol)
    out = _out_dir(cfg)
    cio.atomic_write_text(out / "noise_budget.json", _dump(report))
    print(_dump({k: v for k, v in report.items() if k != "parameters"}), end="")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    seed = cfg.require_seed()
    trace = simulate(cfg, seed=seed)
    out = _out_dir(cfg)
    if args.format == "json":
        name, text = "trace.json", cio.trace_to_json(trace)
    else:
        name, text = "trace.csv", cio.trace_to_csv(trace)
    cio.atomic_write_text(out / name, text)
    manifest = {
        "seed": seed,
        "config_sha256": cfg.sha256(),
        "config": cfg.physics_dict(),
        "files": {name: cio.sha256_file(out / name)},
        "sample_rate_hz": trace.sample_rate,
        "n_samples": len(trace),
        "reset_indices": trace.reset_indices.tolist(),
        "schedule": cio.schedule_to_dict(trace.schedule),
        "ground_truth": {
            "pulse_carriers": trace.pulse_carriers.tolist(),
            "dark_arrival_times_s": trace.dark_arrival_times.tolist(),
        },
    }
    cio.atomic_write_text(out / "manifest.json", _dump(manifest))
    print(_dump({"trace": str(out / name), "n_samples": len(trace),
                 "n_pulses": trace.schedule.n_pulses, "seed": seed}), end="")
    return EXIT_OK


def _load_trace_for(cfg: RunConfig, path: Path):
    if path.suffix.lower() == ".json":
        trace = cio.load_trace(path)
        if trace.schedule is None:
            trace.schedule = cfg.schedule
        return trace
    manifest = path.parent / "manifest.json"
    if manifest.exists():
        meta = json.loads(manifest.read_text())
        trace = cio.load_trace(path, sample_rate=meta.get("sample_rate_hz"),
                               reset_indices=meta.get("reset_indices"))
    else:
        trace = cio.load_trace(path)
        trace.reset_indices = reset_indices_for(len(trace), trace.sample_rate, cfg.reset_period)
    trace.schedule = cfg.schedule
    return trace


def cmd_analyze(args) -> int:
    cfg = _config(args)
    cfg.check_timing()
    trace = _load_trace_for(cfg, Path(args.trace))
    incident = args.incident_mean
    if incident is None:
        incident = trace.schedule.mean_photons
    result = analyze(trace, cfg.detector, cfg.cds, incident_mean=incident)
    out = _out_dir(cfg)
    if args.format == "json":
        cio.atomic_write_text(out / "readout.json", _dump(cio.readout_to_dict(result.readout)))
    else:
        cio.atomic_write_text(out / "readout.csv", cio.readout_to_csv(result.readout))
    cio.atomic_write_text(out / "histogram.csv", cio.histogram_to_csv(result.histogram))
    report = result.report()
    report["incident_mean"] = incident
    cio.atomic_write_text(out / "fit.json", _dump(report))
    print(_dump(report), end="")
    return EXIT_OK


def _parse_grid(specs: list[str]) -> list[tuple[str, list[float]]]:
    grid = []
    for spec in specs:
        name, sep, values = spec.partition("=")
        if not sep or not values:
            raise ConfigError(f"bad --grid {spec!r}; expected NAME=v1,v2,...")
        try:
            grid.append((name.strip(), [float(v) for v in values.split(",")]))
        except ValueError:
            raise ConfigError(f"bad number in --grid {spec!r}") from None
    return grid


def cmd_sweep(args) -> int:
    cfg = _config(args)
    grid = _parse_grid(args.grid or [])
    names = [n for n, _ in grid]
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*names, "cds_noise_voltage_v", "resolution_electrons"])
    rows = []
    for point in itertools.product(*[v for _, v in grid]):
        c = cfg
        for name, value in zip(names, point):
            c = with_value(c, name, value)
        rep = noise_budget(c, rel_tol=args.rel_tol)
        row = [*point, rep["cds_noise_voltage_v"], rep["resolution_electrons"]]
        rows.append(dict(zip([*names, "cds_noise_voltage_v", "resolution_electrons"], row)))
        w.writerow([repr(float(x)) for x in row])
    out = _out_dir(cfg)
    cio.atomic_write_text(out / "sweep.csv", buf.getvalue())
    if args.format == "json":
        cio.atomic_write_text(out / "sweep.json", _dump(rows))
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cipd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt_default="csv"):
        sp.add_argument("--config", metavar="PATH", help="JSON run configuration")
        sp.add_argument("--out", metavar="DIR", help="output directory (overrides run.output_dir)")
        sp.add_argument("--format", choices=("csv", "json"), default=fmt_default)

    sp = sub.add_parser("noise-budget", help="analytic CDS noise and resolution")
    common(sp, "json")
    sp.add_argument("--rel-tol", type=float, default=1e-6)
    sp.set_defaults(func=cmd_noise_budget)

    sp = sub.add_parser("simulate", help="synthesize an output trace")
    common(sp)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("analyze", help="CDS readout, histogram and Poisson fit of a trace")
    common(sp)
    sp.add_argument("--trace", required=True, metavar="PATH")
    sp.add_argument("--incident-mean", type=float,
                    help="incident photons per pulse for QE (default: schedule.mean_photons)")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("sweep", help="resolution over a parameter grid")
    common(sp)
    sp.add_argument("--grid", action="append", metavar="NAME=v1,v2,...")
    sp.add_argument("--rel-tol", type=float, default=1e-6)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except cio.SchemaError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except QuadratureError as exc:
        print(f"numerical error: {exc} (partial estimate {exc.estimate:.6g})", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
