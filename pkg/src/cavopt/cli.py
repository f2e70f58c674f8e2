"""Command-line front end.

Each subcommand reads a scenario config (a JSON file or the name of a shipped
scenario) and writes plot-ready CSV/JSON files into ``--out``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 derivative check failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .eigen import lambda_to_freq
from .config import ConfigError, config_hash, load, scenario_names
from .optimizer import OptimizationError, optimize
from .studies import axis_report, check_derivatives, solve_report, sweep

SCHEMA_VERSION = "1"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4

log = logging.getLogger("cavopt")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return "" if v is None else v


def write_csv(path: Path, columns, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_json(path: Path, data) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def _parse_point(text, n):
    if text is None:
        return None
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError("--p expects comma-separated numbers", "--p") from exc
    if len(values) != n:
        raise ConfigError("--p expects %d values" % n, "--p")
    if any(not 0.0 <= v <= 1.0 for v in values):
        raise ConfigError("--p values must lie in [0, 1]", "--p")
    return np.array(values)


def _metadata():
    return {"version": __version__, "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()}


def _header(scenario) -> dict:
    return {"schema_version": SCHEMA_VERSION, "scenario": scenario.name, "config_sha256": config_hash(scenario.data)}


def cmd_solve(args, scenario) -> int:
    p = _parse_point(args.p, scenario.pipeline.n_params)
    report = dict(_header(scenario), **solve_report(scenario, p))
    report["metadata"] = _metadata()
    path = write_json(args.out / "solve.json", report)
    print("wrote %s" % path)
    for i, f in enumerate(report["frequencies"]):
        print("f_%d = %.9g Hz" % (i + 1, f))
    return EXIT_OK


def cmd_sweep(args, scenario) -> int:
    base = _parse_point(args.p, scenario.pipeline.n_params)
    result = sweep(scenario, args.param, args.samples, base)
    path = write_csv(args.out / "sweep.csv", result.columns, result.rows)
    print("wrote %s (%d rows)" % (path, len(result.rows)))
    for w in result.warnings:
        print(w)
    return EXIT_OK


def _iteration_rows(run, n):
    columns = ["iter"] + ["p%d" % (j + 1) for j in range(n)] + ["g", "f", "k", "phi", "warning"]
    rows = [[r.iteration] + list(r.p) + [r.g, r.f, r.k + 1, r.phi, r.warning or ""] for r in run.records]
    return columns, rows


def _run_summary(scenario, run, objective) -> dict:
    spec = scenario.spec
    pipe = scenario.pipeline
    f_ref = spec.f_ref
    if f_ref is None:
        f_ref = lambda_to_freq(spec.target_lambda)
    out = dict(_header(scenario))
    out.update({
        "variant": spec.variant,
        "gradient": scenario.optimizer.gradient,
        "tracking": scenario.tracking,
        "p0": scenario.p0.tolist(),
        "p_opt": run.p_opt.tolist(),
        "physical_opt": pipe.physical(run.p_opt).tolist(),
        "g_opt": run.g_opt,
        "f_opt": run.f_opt,
        "f_ref": f_ref,
        "relative_error": abs(run.f_opt - f_ref) / f_ref,
        "k_opt": run.k_opt + 1,
        "iterations": run.iterations,
        "function_calls": run.function_calls,
        "gradient_calls": run.gradient_calls,
        "stop_reason": run.reason,
        "crossing_warnings": list(run.warnings),
        "wall_time_s": run.wall_time,
        "terms": dict(run.final.terms) if run.final else {},
    })
    if run.final is not None and run.final.snapshot.labels is not None:
        out["mode_label"] = objective.mode_label(run.final)
        out["start_mode_label"] = pipe.solve(scenario.p0).labels[scenario.mode_index]
    if spec.variant == "flatness-combined" and run.final is not None:
        start = scenario.make_objective().evaluate(scenario.p0)
        out["flatness"] = {
            "eta1_start": start.flatness.eta1, "eta2_start": start.flatness.eta2,
            "eta1": run.final.flatness.eta1, "eta2": run.final.flatness.eta2,
            "peaks_start": start.flatness.peaks.tolist(), "peaks": run.final.flatness.peaks.tolist(),
            "std_ddof": run.final.flatness.ddof,
        }
    return out


def cmd_optimize(args, scenario) -> int:
    objective = scenario.make_objective()
    try:
        run = optimize(objective, scenario.p0, scenario.optimizer)
    except OptimizationError as exc:
        partial = exc.partial
        report = dict(_header(scenario), error=partial.error, iterations=partial.iterations,
                      function_calls=partial.function_calls, metadata=_metadata())
        path = write_json(args.out / "error.json", report)
        print("optimization failed: %s (details in %s)" % (exc, path), file=sys.stderr)
        return EXIT_NUMERIC
    summary = _run_summary(scenario, run, objective)
    summary["metadata"] = _metadata()
    columns, rows = _iteration_rows(run, scenario.pipeline.n_params)
    write_csv(args.out / "iterations.csv", columns, rows)
    path = write_json(args.out / "result.json", summary)
    print("wrote %s" % path)
    print("p_opt = %s, f = %.10g Hz, relative error %.3e, %d iterations, %d function calls (%s)" % (
        np.array2string(run.p_opt, precision=6), run.f_opt, summary["relative_error"], run.iterations,
        run.function_calls, run.reason))
    for w in run.warnings:
        print(w)
    return EXIT_OK


def cmd_check_derivatives(args, scenario) -> int:
    p = _parse_point(args.p, scenario.pipeline.n_params)
    report = dict(_header(scenario), **check_derivatives(scenario, p, delta=args.delta))
    report["metadata"] = _metadata()
    path = write_json(args.out / "derivatives.json", report)
    print("wrote %s" % path)
    for msg in report["failures"]:
        print("FAIL %s" % msg)
    print("derivative check %s" % ("passed" if report["passed"] else "failed"))
    return EXIT_OK if report["passed"] else EXIT_CHECK


def cmd_field(args, scenario) -> int:
    p = _parse_point(args.p, scenario.pipeline.n_params)
    rep = axis_report(scenario, p, samples_per_cell=args.samples)
    columns = ["xi", "x", "y", "value", "cell", "peak"]
    rows = [[xi, pt[0], pt[1], v, c + 1, pk] for xi, pt, v, c, pk in
            zip(rep.xi, rep.points, rep.values, rep.cell, rep.is_peak)]
    path = write_csv(args.out / "axis.csv", columns, rows)
    summary = dict(_header(scenario), k=rep.k + 1, frequency=rep.frequency, peaks=rep.peaks.tolist(),
                   eta1=rep.eta1, eta2=rep.eta2, metadata=_metadata())
    write_json(args.out / "field.json", summary)
    print("wrote %s" % path)
    print("peaks %s, eta1 = %.6f, eta2 = %.6f" % (np.array2string(rep.peaks, precision=6), rep.eta1, rep.eta2))
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "check-derivatives": cmd_check_derivatives,
    "field": cmd_field,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavopt", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True,
                       help="scenario JSON file or shipped scenario name (%s)" % ", ".join(scenario_names()))
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
        p.add_argument("--tracking", choices=["on", "off"], help="override mode tracking")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = common("solve", "eigenfrequencies at one design point")
    p.add_argument("--p", help="normalized design vector, comma separated (default: optimizer p0)")
    p = common("sweep", "frequencies along one parameter")
    p.add_argument("--param", type=int, help="0-based parameter index")
    p.add_argument("--samples", type=int, help="number of sample points")
    p.add_argument("--p", help="base design vector for the other parameters (default: optimizer p0)")
    p = common("optimize", "run the optimization")
    p.add_argument("--grad", choices=["closed-form", "fd"], help="gradient mode override")
    p = common("check-derivatives", "compare closed-form derivatives with finite differences")
    p.add_argument("--p", help="design vector (default: optimizer p0)")
    p.add_argument("--delta", type=float, help="control-point difference step for nonlinear families")
    p = common("field", "on-axis field and cell peaks")
    p.add_argument("--p", help="design vector (default: optimizer p0)")
    p.add_argument("--samples", type=int, help="samples per cell (default: from config)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    tracking = None if args.tracking is None else args.tracking == "on"
    try:
        scenario = load(args.config, getattr(args, "grad", None), tracking)
        if getattr(args, "samples", None) is not None and args.samples < 1:
            raise ConfigError("must be positive", "--samples")
        if getattr(args, "param", None) is not None and not 0 <= args.param < scenario.pipeline.n_params:
            raise ConfigError("parameter index out of range", "--param")
        return COMMANDS[args.command](args, scenario)
    except ConfigError as exc:
        print("config error at %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError, ValueError) as exc:
        print("numerical failure: %s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
