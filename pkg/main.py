"""
Command-line entry point for the gravity-compensation toolkit
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from config import config
from controller import (
    ControllerState,
    Gains,
    GravityPIDController,
    drift_metric,
    oscillation_metrics,
    settling_time,
    steady_state_error,
    tune_gains,
)
from errors import DegenerateModelError, DimensionError, GravcompError, ParseError
from gravity_model import GravityParams, base_reduction
from identification import identify, synth_dataset
from kinematics import forward_kinematics
from logging_config import LogExecutionTime, get_structured_logger, setup_logging
from plant_sim import simulate
from schemas import load_experiment, load_params, load_robot
from storage import read_dataset, write_dataset, write_json, write_report, write_trajectory

logger = logging.getLogger(__name__)

console = Console(soft_wrap=True, highlight=False)


def parse_vector(text: str, what: str = "q") -> np.ndarray:
    """Inline list: ``"0,0.5,1"`` or ``"[0, 0.5, 1]"``"""
    stripped = text.strip()
    try:
        if stripped.startswith("["):
            values = json.loads(stripped)
        else:
            values = [float(v) for v in stripped.split(",") if v.strip()]
        return np.array(values, dtype=float).reshape(-1)
    except (ValueError, TypeError) as e:
        raise ParseError(f"{what}: cannot parse {text!r} as a list of numbers") from e


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def cmd_fk(args) -> dict:
    model = load_robot(args.robot)
    q = parse_vector(args.q)
    if q.size != model.n:
        raise DimensionError(f"q has {q.size} entries, robot '{model.name}' expects n={model.n}")
    frames = forward_kinematics(model, q)
    for i, frame in enumerate(frames, start=1):
        origin = " ".join(_fmt(v) for v in frame.origin)
        rotation = "; ".join(" ".join(_fmt(v) for v in row) for row in frame.rotation)
        console.print(f"frame {i}: origin [{origin}] rotation [{rotation}]", markup=False)
    return {"robot": model.name, "n": model.n}


def cmd_synth(args) -> dict:
    model = load_robot(args.robot)
    params = load_params(args.params, model, Path.cwd()) if args.params else GravityParams.from_model(model)
    data = synth_dataset(model, params, args.poses, noise_std=args.noise, seed=args.seed)
    write_dataset(args.out, data)
    console.print(f"Wrote {data.n_samples} samples for '{model.name}' to {args.out}")
    return {"robot": model.name, "poses": args.poses, "noise": args.noise, "seed": args.seed,
            "out": str(args.out)}


def cmd_identify(args) -> dict:
    model = load_robot(args.robot)
    data = read_dataset(args.dataset, n=model.n)
    report = identify(model, data, args.tol, seed=args.seed, method=args.method, jobs=args.jobs)
    if report.rank == 0:
        raise DegenerateModelError(
            "regressor has rank 0: gravity produces no torque in any sampled pose, "
            "so no parameter is identifiable (check the gravity vector and geometry)"
        )
    if args.out:
        write_report(args.out, report)

    table = Table(show_header=True, header_style="bold magenta", title=f"Identification: {model.name}")
    table.add_column("Quantity", style="dim")
    table.add_column("Value")
    table.add_row("samples", str(report.n_samples))
    table.add_row("rank", str(report.rank))
    table.add_row("condition number", f"{report.condition_number:.6g}")
    table.add_row("residual rms [N*m]", f"{report.residual_rms:.6g}")
    table.add_row("per-joint rms [N*m]", " ".join(f"{v:.3g}" for v in report.per_joint_rms))
    if report.validation_rms is not None:
        table.add_row("held-out rms [N*m]", f"{report.validation_rms:.6g} ({report.n_validation} samples)")
    console.print(table)
    return {"robot": model.name, "rank": report.rank, "residual_rms": report.residual_rms,
            "condition_number": report.condition_number, "out": str(args.out) if args.out else None}


def _resolve_gains(experiment) -> Gains:
    if experiment.tune_gains:
        gains, _ = tune_gains(
            experiment.model, experiment.params_plant, experiment.params_hat,
            experiment.sim_config, q0=experiment.target_q, zero_mask=experiment.zero_mask,
        )
        return gains
    return experiment.gains or Gains.zeros(experiment.model.n)


def cmd_simulate(args) -> dict:
    experiment = load_experiment(args.experiment)
    model, n = experiment.model, experiment.model.n
    gains = _resolve_gains(experiment)
    state = ControllerState.initial(
        n, target_q=experiment.target_q, target_qdot=experiment.target_qdot,
        zero_mask=experiment.zero_mask, windup_limit=experiment.windup_limit,
    )
    controller = GravityPIDController(
        model, experiment.params_hat, gains, state, torque_limit=experiment.torque_limit
    )
    log = simulate(model, experiment.params_plant, controller, experiment.sim_config,
                   experiment.q0, experiment.qdot0)
    write_trajectory(args.out, log)

    drift = drift_metric(log, experiment.release_t)
    window = experiment.metrics_window or (experiment.release_t, float(log.t[-1]))
    error = steady_state_error(log, experiment.target_q, experiment.metrics_window)
    settle = settling_time(log, experiment.target_q)

    table = Table(show_header=True, header_style="bold magenta",
                  title=f"Simulation: {model.name} ({len(log)} rows)")
    for column in ("joint", "drift [rad]", "amplitude [rad]", "frequency [Hz]",
                   "final error [rad]", "settled at [s]"):
        table.add_column(column)
    oscillations = []
    for j in range(n):
        osc = oscillation_metrics(log, j, window)
        oscillations.append(osc)
        table.add_row(
            str(j + 1),
            f"{drift[j]:.3e}",
            f"{osc.amplitude:.3e}",
            f"{osc.frequency:.3f}" if osc.oscillatory else "-",
            f"{error[j]:.3e}",
            f"{settle[j]:.3f}" if np.isfinite(settle[j]) else "never",
        )
    console.print(table)
    console.print(f"Wrote trajectory to {args.out}")
    return {
        "experiment": str(args.experiment),
        "drift": drift.tolist(),
        "amplitude": [o.amplitude for o in oscillations],
        "frequency": [o.frequency if o.oscillatory else None for o in oscillations],
        "out": str(args.out),
    }


def cmd_rank(args) -> dict:
    model = load_robot(args.robot)
    base_map = base_reduction(model, n_poses=args.poses, seed=args.seed, tol=args.tol)
    names = GravityParams.zeros(model.n).names()
    console.print(f"rank: {base_map.rank} of {4 * model.n}")
    console.print(f"pivot columns: {' '.join(str(int(j)) for j in base_map.independent_columns)}")
    console.print(f"base parameters: {' '.join(base_map.column_names(names))}")
    console.print(f"condition number: {base_map.condition_number:.6g}")
    return {"robot": model.name, "rank": base_map.rank,
            "columns": [int(j) for j in base_map.independent_columns],
            "condition_number": base_map.condition_number}


def cmd_tune(args) -> dict:
    experiment = load_experiment(args.experiment)
    with LogExecutionTime("gain tuning", logger):
        gains, results = tune_gains(
            experiment.model, experiment.params_plant, experiment.params_hat,
            experiment.sim_config, q0=experiment.target_q, zero_mask=experiment.zero_mask,
        )
    payload = {
        **gains.to_dict(),
        "joints": [
            {"joint": r.joint + 1, "kp_critical": r.kp_critical, "period": r.period,
             "ratio": r.ratio, "iterations": r.iterations}
            for r in results
        ],
    }
    write_json(args.out, payload)

    table = Table(show_header=True, header_style="bold magenta", title="Tuned gains")
    for column in ("joint", "kp", "kv", "ki", "period [s]"):
        table.add_column(column)
    periods = {r.joint: r.period for r in results}
    for j in range(experiment.model.n):
        period = periods.get(j)
        table.add_row(str(j + 1), f"{gains.kp[j]:.6g}", f"{gains.kv[j]:.6g}", f"{gains.ki[j]:.6g}",
                      f"{period:.4g}" if period is not None else "masked")
    console.print(table)
    return {"experiment": str(args.experiment), "out": str(args.out), **gains.to_dict()}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gravcomp",
        description="Gravity compensation toolkit for serial manipulators",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py fk --robot data/mtm.json --q 0,0,0,0,0,0,0
  python main.py synth --robot data/mtm.json --poses 200 --noise 0.01 --seed 1 --out data.csv
  python main.py identify --robot data/mtm.json --dataset data.csv --out report.json
  python main.py rank --robot data/mtm.json --poses 500 --seed 3
  python main.py simulate --experiment data/experiments/hold.json --out log.csv
  python main.py tune --experiment data/experiments/pid_mismatch.json --out gains.json
        """,
    )
    parser.add_argument("--log-level", default=None,
                        help="Logging level (default: GRAVCOMP_LOG_LEVEL or INFO)")
    parser.add_argument("-v", "--verbose", action="store_true", help="Shortcut for --log-level DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    fk = sub.add_parser("fk", help="Print frame poses for a joint configuration")
    fk.add_argument("--robot", type=Path, default=config.default_robot)
    fk.add_argument("--q", required=True, help="Joint angles, e.g. 0,0.5,0 (rad)")
    fk.set_defaults(handler=cmd_fk)

    synth = sub.add_parser("synth", help="Write a synthetic hold-pose dataset")
    synth.add_argument("--robot", type=Path, default=config.default_robot)
    synth.add_argument("--params", default=None,
                       help="Parameter file (list, {'params': [...]} or report); default: robot links")
    synth.add_argument("--poses", type=int, default=100)
    synth.add_argument("--noise", type=float, default=0.0, help="Torque noise std (N*m)")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", type=Path, required=True)
    synth.set_defaults(handler=cmd_synth)

    ident = sub.add_parser("identify", help="Least-squares fit of gravity parameters")
    ident.add_argument("--robot", type=Path, default=config.default_robot)
    ident.add_argument("--dataset", type=Path, required=True)
    ident.add_argument("--out", type=Path, default=None, help="Report JSON path")
    ident.add_argument("--tol", type=float, default=None, help="Relative singular value cutoff")
    ident.add_argument("--seed", type=int, default=0, help="Held-out split seed")
    ident.add_argument("--method", choices=("svd", "normal"), default="svd")
    ident.add_argument("--jobs", type=int, default=1)
    ident.set_defaults(handler=cmd_identify)

    sim = sub.add_parser("simulate", help="Run a closed-loop experiment")
    sim.add_argument("--experiment", type=Path, required=True)
    sim.add_argument("--out", type=Path, required=True, help="Trajectory CSV path")
    sim.set_defaults(handler=cmd_simulate)

    rank = sub.add_parser("rank", help="Number of identifiable parameter combinations")
    rank.add_argument("--robot", type=Path, default=config.default_robot)
    rank.add_argument("--poses", type=int, default=None)
    rank.add_argument("--seed", type=int, default=0)
    rank.add_argument("--tol", type=float, default=None)
    rank.set_defaults(handler=cmd_rank)

    tune = sub.add_parser("tune", help="Oscillation-based gain tuning for an experiment")
    tune.add_argument("--experiment", type=Path, required=True)
    tune.add_argument("--out", type=Path, required=True, help="Gains JSON path")
    tune.set_defaults(handler=cmd_tune)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns the process exit code"""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(log_level="DEBUG" if args.verbose else args.log_level)
    structured = get_structured_logger()

    try:
        details = args.handler(args)
    except GravcompError as e:
        console.print(f"[red]error:[/red] {escape(str(e))}")
        structured.log_error(type(e).__name__, str(e), {"command": args.command})
        return e.exit_code
    except ValueError as e:
        console.print(f"[red]invalid input:[/red] {escape(str(e))}")
        structured.log_error(type(e).__name__, str(e), {"command": args.command})
        return ParseError.exit_code

    structured.log_run_event(args.command, details)
    return 0


if __name__ == "__main__":
    sys.exit(main())
