"""Command-line front end.

Four commands, all writing deterministic artifacts plus a hashed manifest
into ``--out``:

* ``solve`` -- value-field binary (``value_field.npy``) with a JSON sidecar.
* ``regions`` -- switching-region masks (``regions.npy``), a flat CSV of
  region nodes, and a JSON summary.
* ``simulate`` -- policy-driven ensemble: per-path CSV plus summary JSON.
* ``scenario {deteriorate|noise|mode1|mode2}`` -- experiment sweeps, one CSV
  per output series plus a ``scenario.json`` summary.

Randomness policy: stochastic commands require ``--seed``.  The single seed
drives everything downstream -- ensembles spawn one PCG64 stream per path
from ``SeedSequence(seed)``, and sweep commands derive per-point seeds by
adding the sweep value (documented per scenario).  Reruns with the same
configuration and seed reproduce every artifact byte for byte; the manifest
digest makes that checkable at a glance.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .artifacts import write_csv, write_json, write_manifest, write_timings
from .hjb import Grid, solve_backward
from .model import ConfigError, Problem, validate_problem
from .presets import PRESETS, default_grid_shape, load_problem, preset_spec
from .regions import extract_regions, region_rows
from .scenarios import (
    DEFAULT_AMPLITUDE_GRID,
    DEFAULT_LAMBDA_GRID,
    DEFAULT_PARTITION_GRID,
    deteriorate,
    mode1_sweep,
    mode2_run,
    noise_sweep,
)
from .simulate import run_ensemble

log = logging.getLogger("migswitch")


def _float_grid(text: str) -> tuple[float, ...]:
    values = tuple(float(tok) for tok in text.split(",") if tok.strip())
    if not values:
        raise ValueError("empty grid")
    return values


def _int_grid(text: str) -> tuple[int, ...]:
    values = tuple(int(tok) for tok in text.split(",") if tok.strip())
    if not values:
        raise ValueError("empty grid")
    return values


def _add_problem_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--preset",
        choices=sorted(PRESETS),
        help="bundled problem preset",
    )
    parser.add_argument(
        "--config",
        metavar="PATH",
        help="JSON problem configuration (see config_schema.json)",
    )
    parser.add_argument("--nx", type=int, help="space nodes for the solve")
    parser.add_argument("--nt", type=int, help="time steps for the solve")
    parser.add_argument(
        "--out", required=True, metavar="DIR", help="artifact directory"
    )


def _add_simulation_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--paths", type=int, default=500, help="ensemble size (default 500)"
    )
    parser.add_argument(
        "--seed",
        type=int,
        required=True,
        help="single 64-bit seed driving all randomness",
    )
    parser.add_argument(
        "--dx-sim",
        type=float,
        help="walker lattice spacing (default: the solve grid spacing)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="migswitch",
        description="optimal-switching solver and experiment runner",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", help="solve the value functions")
    _add_problem_arguments(solve)
    solve.set_defaults(handler=_cmd_solve)

    regions = commands.add_parser(
        "regions", help="solve and extract switching regions"
    )
    _add_problem_arguments(regions)
    regions.set_defaults(handler=_cmd_regions)

    simulate = commands.add_parser(
        "simulate", help="simulate a policy-driven ensemble"
    )
    _add_problem_arguments(simulate)
    _add_simulation_arguments(simulate)
    simulate.set_defaults(handler=_cmd_simulate)

    scenario = commands.add_parser("scenario", help="run an experiment sweep")
    kinds = scenario.add_subparsers(dest="scenario", required=True)

    det = kinds.add_parser(
        "deteriorate", help="staging-reward deterioration sweep"
    )
    _add_problem_arguments(det)
    _add_simulation_arguments(det)
    det.add_argument(
        "--lambda-grid",
        type=_float_grid,
        default=DEFAULT_LAMBDA_GRID,
        help="comma-separated deterioration levels in [0, 1]",
    )
    det.add_argument(
        "--gamma",
        type=float,
        default=0.0,
        help="season-advance factor coupled to the deterioration level",
    )
    det.add_argument(
        "--site", type=int, default=2, help="staging site to deteriorate"
    )
    det.set_defaults(handler=_cmd_scenario)

    noise = kinds.add_parser("noise", help="seasonal noise-amplitude sweep")
    _add_problem_arguments(noise)
    _add_simulation_arguments(noise)
    noise.add_argument(
        "--amplitude-grid",
        type=_float_grid,
        default=DEFAULT_AMPLITUDE_GRID,
        help="comma-separated ripple amplitudes in [0, 1]",
    )
    noise.set_defaults(handler=_cmd_scenario)

    mode1 = kinds.add_parser(
        "mode1", help="coarse seasonal perception sweep"
    )
    _add_problem_arguments(mode1)
    _add_simulation_arguments(mode1)
    mode1.add_argument(
        "--partition-grid",
        type=_int_grid,
        default=DEFAULT_PARTITION_GRID,
        help="comma-separated perception cell counts",
    )
    mode1.add_argument(
        "--stopover",
        type=int,
        default=1,
        help="site delivering the true season",
    )
    mode1.set_defaults(handler=_cmd_scenario)

    mode2 = kinds.add_parser("mode2", help="advanced-season cohort run")
    _add_problem_arguments(mode2)
    _add_simulation_arguments(mode2)
    mode2.add_argument(
        "--t-move",
        type=float,
        required=True,
        help="how many days earlier the actual season arrives",
    )
    mode2.add_argument(
        "--stopover",
        type=int,
        default=1,
        help="site delivering the true season",
    )
    mode2.set_defaults(handler=_cmd_scenario)

    return parser


# -- shared plumbing -----------------------------------------------------------


def _resolve_problem(args) -> Problem:
    if args.preset and args.config:
        raise ConfigError("pass either --preset or --config, not both")
    if args.preset:
        return validate_problem(preset_spec(args.preset))
    if args.config:
        return load_problem(args.config)
    raise ConfigError("one of --preset or --config is required")


def _resolve_grid(problem: Problem, args) -> Grid:
    nx, nt = default_grid_shape(problem)
    if args.nx is not None:
        nx = args.nx
    if args.nt is not None:
        nt = args.nt
    return Grid(nx=nx, nt=nt, length=problem.length, horizon=problem.horizon)


def _base_config(problem: Problem, grid: Grid, args) -> dict:
    return {
        "preset": args.preset,
        "config_path": args.config,
        "problem_hash": problem.problem_hash(),
        "nx": grid.nx,
        "nt": grid.nt,
    }


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _grid_sidecar(grid: Grid) -> dict:
    return {
        "nx": grid.nx,
        "nt": grid.nt,
        "length": grid.length,
        "horizon": grid.horizon,
        "dx": grid.dx,
        "dt": grid.dt,
    }


# -- command handlers ----------------------------------------------------------


def _cmd_solve(args) -> int:
    problem = _resolve_problem(args)
    grid = _resolve_grid(problem, args)
    out = _out_dir(args)
    started = time.perf_counter()
    fld = solve_backward(problem, grid)
    solve_s = time.perf_counter() - started
    np.save(out / "value_field.npy", fld.values)
    write_json(
        out / "value_field.json",
        {
            "grid": _grid_sidecar(grid),
            "regime_indices": list(fld.regime_indices),
            "problem_hash": fld.problem_hash,
            "start_value": fld.at_start(
                problem.start.regime, problem.start.x
            ),
        },
    )
    write_manifest(out, "solve", _base_config(problem, grid, args))
    write_timings(out, {"solve_s": solve_s})
    log.info("solved %s on %dx%d -> %s", problem.label, grid.nx, grid.nt, out)
    return 0


def _cmd_regions(args) -> int:
    problem = _resolve_problem(args)
    grid = _resolve_grid(problem, args)
    out = _out_dir(args)
    started = time.perf_counter()
    fld = solve_backward(problem, grid)
    regions = extract_regions(problem, fld)
    solve_s = time.perf_counter() - started
    np.save(out / "regions.npy", regions.masks)
    rows = region_rows(regions)
    write_csv(
        out / "regions.csv",
        ("from_regime", "to_regime", "time_index", "node_index", "t", "x"),
        [
            (
                r["from_regime"],
                r["to_regime"],
                r["time_index"],
                r["node_index"],
                r["t"],
                r["x"],
            )
            for r in rows
        ],
    )
    write_json(
        out / "regions.json",
        {
            "grid": _grid_sidecar(grid),
            "regime_indices": list(regions.regime_indices),
            "problem_hash": regions.problem_hash,
            "tolerance": regions.tol,
            "node_counts": {
                f"{i}->{j}": regions.node_count(i, j)
                for i in regions.regime_indices
                for j in regions.regime_indices
                if i != j and regions.node_count(i, j)
            },
        },
    )
    write_manifest(out, "regions", _base_config(problem, grid, args))
    write_timings(out, {"solve_s": solve_s})
    log.info("extracted %d region nodes -> %s", len(rows), out)
    return 0


def _cmd_simulate(args) -> int:
    problem = _resolve_problem(args)
    grid = _resolve_grid(problem, args)
    out = _out_dir(args)
    started = time.perf_counter()
    fld = solve_backward(problem, grid)
    regions = extract_regions(problem, fld)
    solve_s = time.perf_counter() - started
    started = time.perf_counter()
    ensemble = run_ensemble(
        problem, regions, n_paths=args.paths, seed=args.seed, dx=args.dx_sim
    )
    simulate_s = time.perf_counter() - started
    payoff = ensemble.realized(problem)
    header = [
        "path",
        "arrived",
        "arrival_time",
        "final_regime",
        "payoff",
        "switch_count",
    ] + [f"site_wait_{s.index}" for s in problem.sites]
    rows = []
    for k in range(ensemble.n_paths):
        rows.append(
            (
                k,
                bool(ensemble.arrived[k]),
                float(ensemble.arrival_time[k]),
                int(ensemble.final_regime[k]),
                float(payoff[k]),
                int(ensemble.switch_count[k]),
            )
            + tuple(float(w) for w in ensemble.site_wait[k])
        )
    write_csv(out / "paths.csv", header, rows)
    summary = ensemble.summary(problem)
    summary["value_at_start"] = fld.at_start(
        problem.start.regime, problem.start.x
    )
    summary["problem_hash"] = problem.problem_hash()
    summary["grid"] = _grid_sidecar(grid)
    summary["dx_sim"] = ensemble.calibration.dx
    write_json(out / "ensemble.json", summary)
    config = _base_config(problem, grid, args)
    config.update({"paths": args.paths, "dx_sim": args.dx_sim})
    write_manifest(out, "simulate", config, seed=args.seed)
    write_timings(out, {"solve_s": solve_s, "simulate_s": simulate_s})
    log.info(
        "simulated %d paths (%.0f%% arrived) -> %s",
        ensemble.n_paths,
        100.0 * ensemble.arrival_fraction,
        out,
    )
    return 0


def _scenario_summary(name: str, result) -> dict:
    if name == "deteriorate":
        interval = result.critical_interval()
        return {
            "site_index": result.site_index,
            "gamma": result.gamma,
            "levels": list(result.levels),
            "critical_interval": list(interval) if interval else None,
            "flat_onset": result.flat_onset(),
            "values": [p.value_at_start for p in result.points],
        }
    if name == "noise":
        return {
            "amplitudes": list(result.amplitudes),
            "variances": [p.variance for p in result.points],
            "value_at_start": result.value_at_start,
            "arrival_fraction": result.arrival_fraction,
        }
    if name == "mode1":
        return {
            "n_grid": list(result.n_grid),
            "mismatches": [p.mismatch for p in result.points],
            "standard_errors": [p.mismatch_se for p in result.points],
            "informed_paths": [p.n_informed for p in result.points],
        }
    return {
        "t_move": result.t_move,
        "n_waiting": int(result.waiting_times.size),
        "n_nonwaiting": int(result.nonwaiting_times.size),
        "waiting_median": result.waiting_median,
        "nonwaiting_median": result.nonwaiting_median,
        "n_informed": result.n_informed,
        "value_at_start": result.value_at_start,
    }


def _cmd_scenario(args) -> int:
    problem = _resolve_problem(args)
    grid = _resolve_grid(problem, args)
    out = _out_dir(args)
    config = _base_config(problem, grid, args)
    config.update({"paths": args.paths, "dx_sim": args.dx_sim})
    started = time.perf_counter()
    if args.scenario == "deteriorate":
        result = deteriorate(
            problem,
            levels=args.lambda_grid,
            gamma=args.gamma,
            site_index=args.site,
            n_paths=args.paths,
            seed=args.seed,
            grid=grid,
            dx_sim=args.dx_sim,
        )
        config.update(
            {
                "lambda_grid": list(args.lambda_grid),
                "gamma": args.gamma,
                "site": args.site,
            }
        )
    elif args.scenario == "noise":
        result = noise_sweep(
            problem,
            amplitudes=args.amplitude_grid,
            n_paths=args.paths,
            seed=args.seed,
            grid=grid,
            dx_sim=args.dx_sim,
        )
        config.update({"amplitude_grid": list(args.amplitude_grid)})
    elif args.scenario == "mode1":
        result = mode1_sweep(
            problem,
            n_grid=args.partition_grid,
            n_paths=args.paths,
            seed=args.seed,
            grid=grid,
            stopover_index=args.stopover,
            dx_sim=args.dx_sim,
        )
        config.update(
            {
                "partition_grid": list(args.partition_grid),
                "stopover": args.stopover,
            }
        )
    else:
        result = mode2_run(
            problem,
            t_move=args.t_move,
            n_paths=args.paths,
            seed=args.seed,
            grid=grid,
            stopover_index=args.stopover,
            dx_sim=args.dx_sim,
        )
        config.update({"t_move": args.t_move, "stopover": args.stopover})
    scenario_s = time.perf_counter() - started
    for name, (header, rows) in result.tables().items():
        write_csv(out / f"{name}.csv", header, rows)
    write_json(
        out / "scenario.json", _scenario_summary(args.scenario, result)
    )
    write_manifest(out, f"scenario {args.scenario}", config, seed=args.seed)
    write_timings(out, {"scenario_s": scenario_s})
    log.info("scenario %s -> %s", args.scenario, out)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(message)s", stream=sys.stderr
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: configuration: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: i/o: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # solver or numeric failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
