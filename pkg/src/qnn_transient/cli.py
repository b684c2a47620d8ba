"""Batch driver: ``qnn-transient {solve,oracle,compare,sweep}``.

Exit status: 0 success, 2 configuration/input error, 3 domain error
(arcsin embedding outside (-1, 1)), 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ConfigError, RunConfig, load_config, parse_sweep_values
from .oracle import OracleDivergence, SchemaError, Trajectory, format_float, mse_table, solve_oracle, uniform_grid
from .quantum import ArcsinDomainError
from .systems import DaeSystem, SystemConfigError, make_system
from .training import WindowFailure, solve_trajectory

log = logging.getLogger("qnn_transient")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_NUMERICAL = 4

SUMMARY_COLUMNS = ("window", "t_start", "t_end", "phase", "loss_boundary", "loss_points", "total",
                   "iterations", "status", "best_restart")


def _system(cfg: RunConfig) -> DaeSystem:
    return make_system(cfg.system, wscc_file=cfg.wscc_file, smib=cfg.smib)


def _grid(cfg: RunConfig) -> np.ndarray:
    return uniform_grid(0.0, cfg.span, cfg.output_step)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return "" if v is None else str(v)


def _prepare_output(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("output_dir", f"cannot create {out}: {exc.strerror}") from None
    with open(out / "config_resolved.json", "w") as fh:
        json.dump(cfg.resolved(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def run_solve(cfg: RunConfig, out: Path) -> Trajectory:
    """Train window by window; writes trajectory, summary and convergence log."""
    system = _system(cfg)
    grid = _grid(cfg)
    with open(out / "convergence.jsonl", "w") as logf:
        logf.write(json.dumps({"record": "config_resolved", **cfg.resolved()}, sort_keys=True) + "\n")

        def on_iteration(rec):
            logf.write(json.dumps({"record": "iteration", **rec}) + "\n")

        def on_window(res):
            w = res.window
            logf.write(json.dumps({
                "record": "window", "window": w.index, "t_start": w.t_start, "t_end": w.t_end,
                "total": res.loss.total, "status": res.status, "iterations": res.iterations,
                "restart_losses": res.restart_losses, "wall_time": res.wall_time,
            }) + "\n")
            logf.flush()

        result = solve_trajectory(system, cfg.span, cfg.training, cfg.model_options, grid,
                                  on_window=on_window, on_iteration=on_iteration)
    result.trajectory.to_csv(out / "trajectory.csv")
    rows = []
    for res in result.windows:
        w = res.window
        rows.append([w.index, w.t_start, w.t_end, getattr(w.phase, "label", None), res.loss.loss_boundary,
                     res.loss.loss_points, res.loss.total, res.iterations, res.status,
                     int(np.argmin(res.restart_losses))])
    _write_rows(out / "summary.csv", SUMMARY_COLUMNS, [[_cell(v) for v in r] for r in rows])
    if cfg.emit_plots:
        ref = run_oracle_trajectory(cfg, system)
        _write_plot_pairs(out, result.trajectory, ref)
    return result.trajectory


def run_oracle_trajectory(cfg: RunConfig, system: Optional[DaeSystem] = None) -> Trajectory:
    system = _system(cfg) if system is None else system
    return solve_oracle(system, cfg.span, step=cfg.oracle.step, fault_step=cfg.oracle.fault_step,
                        output_times=_grid(cfg))


def _write_plot_pairs(out: Path, qnn: Trajectory, ref: Trajectory) -> None:
    plots = out / "plot_data"
    plots.mkdir(exist_ok=True)
    for name in ref.names:
        rows = [[format_float(t), format_float(a), format_float(b)]
                for t, a, b in zip(ref.times, qnn[name], ref[name])]
        _write_rows(plots / f"{name}.csv", ("t", "qnn", "oracle"), rows)


def write_mse(path: Path, table: dict) -> None:
    _write_rows(path, ("variable", "mse"), [[k, format_float(v)] for k, v in table.items()])


def run_sweep(cfg: RunConfig, out: Path, axis: str, values: Sequence) -> list:
    """One solve per value in its own subdirectory; failures are recorded, not fatal."""
    system = _system(cfg)
    ref = run_oracle_trajectory(cfg, system)
    rows = []
    for v in values:
        train = replace(cfg.training, **{axis: v})
        sub = out / f"{axis}_{v}"
        run_cfg = replace(cfg, training=train, output_dir=sub, emit_plots=False)
        row = {"value": v, "status": "ok", "error": ""}
        try:
            _prepare_output(run_cfg)
            traj = run_solve(run_cfg, sub)
            row.update(mse_table(traj, ref))
        except (ArcsinDomainError, WindowFailure, ArithmeticError, ValueError) as exc:
            row.update(status=type(exc).__name__, error=str(exc))
        rows.append(row)
        log.info("sweep %s=%s: %s", axis, v, row.get("Average", row["status"]))
    cols = ["value", "status"] + list(ref.names) + ["Average", "error"]
    _write_rows(out / "sweep.csv", [axis] + cols[1:], [[_cell(r.get(c)) for c in cols] for r in rows])
    if cfg.emit_plots:
        plots = out / "plot_data"
        plots.mkdir(exist_ok=True)
        _write_rows(plots / f"sweep_{axis}.csv", (axis, "Average"),
                    [[_cell(r["value"]), _cell(r.get("Average"))] for r in rows if "Average" in r])
    return rows


def _cmd_solve(args) -> int:
    cfg = load_config(args.config)
    run_solve(cfg, _prepare_output(cfg))
    return EXIT_OK


def _cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    out = _prepare_output(cfg)
    run_oracle_trajectory(cfg).to_csv(out / "oracle.csv")
    return EXIT_OK


def _cmd_compare(args) -> int:
    try:
        qnn = Trajectory.from_csv(args.qnn_csv)
        ref = Trajectory.from_csv(args.oracle_csv)
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {exc.filename}: {exc.strerror}") from None
    except ValueError as exc:
        raise SchemaError(str(exc)) from None
    table = mse_table(qnn, ref)
    out = Path(args.output) if args.output else Path(args.qnn_csv).with_name("mse.csv")
    write_mse(out, table)
    print(f"Average MSE {table['Average']:.6e} -> {out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.axis is not None:
        if args.axis not in ("time_span", "num_points"):
            raise ConfigError("sweep.axis", f"expected time_span or num_points, got {args.axis!r}")
        raw = [] if args.values is None else [s for s in args.values.split(",") if s.strip()]
        values = parse_sweep_values(args.axis, [float(s) for s in raw])
        axis = args.axis
    elif cfg.sweep is not None:
        axis, values = cfg.sweep.axis, cfg.sweep.values
    else:
        raise ConfigError("sweep", "no sweep axis given on the command line or in the config")
    run_sweep(cfg, _prepare_output(cfg), axis, values)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qnn-transient", description="QNN solvers for power-system transient DAEs")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-window progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="train QNN surrogates window by window")
    s.add_argument("config")
    s.set_defaults(func=_cmd_solve)

    o = sub.add_parser("oracle", help="integrate the reference RK4 solution")
    o.add_argument("config")
    o.set_defaults(func=_cmd_oracle)

    c = sub.add_parser("compare", help="per-variable MSE between two trajectory CSVs")
    c.add_argument("qnn_csv")
    c.add_argument("oracle_csv")
    c.add_argument("-o", "--output", help="where to write mse.csv (default: next to qnn_csv)")
    c.set_defaults(func=_cmd_compare)

    w = sub.add_parser("sweep", help="repeat solve over time_span or num_points values")
    w.add_argument("config")
    w.add_argument("--axis", help="time_span or num_points (overrides the config)")
    w.add_argument("--values", help="comma-separated values, e.g. 1,0.5,0.2")
    w.set_defaults(func=_cmd_sweep)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        code = args.func(args)
    except ArcsinDomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ConfigError, SystemConfigError, SchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WindowFailure, OracleDivergence, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - started)
    return code


if __name__ == "__main__":
    sys.exit(main())
