"""Command-line entry point.

Exit codes: 0 success, 2 bad configuration or input data, 3 infeasible
segment, 4 solver did not converge (outputs are still written and flagged).
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__, baseline, efficiency, report
from .config import (ConfigError, RunConfig, build_problem, config_from_dict, load_config,
                     resolve_cycle, resolve_map, solver_options)
from .optimizer import InfeasibleSpecError, profile_energy, solve
from .transient import penalized_samples

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NOT_CONVERGED = 4

PENALTY_SWEEP_DEFAULTS = {"vehicle": "type1", "map": "type2", "distance": 1000.0,
                          "v_avg": 10.0}

log = logging.getLogger("ecodrive")


def _cell_name(vehicle, map_id, v_avg, distance, penalty=None) -> str:
    name = f"{Path(str(vehicle)).stem}_{Path(str(map_id)).stem}_v{v_avg:g}_x{distance:g}"
    return name if penalty is None else f"{name}_p{100 * penalty:g}"


def run_cell(cfg: RunConfig, vehicle, map_id, distance, v_avg, penalty=None,
             profile_dir=None) -> dict:
    """Solve one segment and compare it with the typical-traffic profile.

    Never raises for per-cell failures; the outcome is recorded in ``status``.
    """
    label = vehicle if isinstance(vehicle, str) else vehicle.get("name", "inline")
    row = {"vehicle": label, "map": Path(str(map_id)).stem, "v_avg_mps": float(v_avg),
           "distance_m": float(distance), "converged": False}
    if penalty is not None:
        row["penalty_pct"] = 100.0 * penalty
    try:
        problem = build_problem(cfg, vehicle_ref=vehicle, map_ref=map_id, distance=distance,
                                v_avg=v_avg, penalty_fraction=penalty)
        row["n_samples"] = problem.spec.n_samples
        segments = baseline.split_segments(resolve_cycle(cfg))
        typical = baseline.typical_profile(segments, distance, v_avg, cfg.dt,
                                           n_samples=problem.spec.n_samples)
        row["typical_kWs"] = profile_energy(typical, problem) / 1e3
        result = solve(problem, solver_options(cfg))
    except InfeasibleSpecError as exc:
        row["status"] = f"infeasible: {exc}"
        return row
    except baseline.BaselineDataError as exc:
        row["status"] = f"no baseline: {exc}"
        return row
    except (ConfigError, ValueError) as exc:
        row["status"] = f"error: {exc}"
        return row

    e_bat = result.breakdown.e_bat
    if problem.penalty is not None:
        bd = result.breakdown
        e_bat = penalized_samples(bd.e_bat, bd.torque, bd.dt, problem.penalty)
    row["optimal_kWs"] = result.total_battery_energy / 1e3
    row["savings_pct"] = 100.0 * (1.0 - row["optimal_kWs"] / row["typical_kWs"])
    row["converged"] = result.converged
    row["status"] = "ok" if result.converged else (
        f"not converged (violation {result.constraint_violation:.1e})")
    if profile_dir is not None:
        name = _cell_name(label, map_id, v_avg, distance, penalty)
        report.atomic_write_text(Path(profile_dir) / f"{name}.csv",
                                 baseline.profile_to_csv(result.profile))
        report.atomic_write_text(Path(profile_dir) / f"{name}_breakdown.csv",
                                 report.breakdown_csv(result.breakdown, e_bat))
        report.atomic_write_text(Path(profile_dir) / f"{name}_typical.csv",
                                 baseline.profile_to_csv(typical))
    return row


def _run_cell_args(args):
    return run_cell(*args)


def _row_exit_code(rows) -> int:
    status = [r["status"] for r in rows]
    if any(s.startswith(("error", "no baseline")) for s in status):
        return EXIT_CONFIG
    if any(s.startswith("infeasible") for s in status):
        return EXIT_INFEASIBLE
    if not all(r["converged"] for r in rows):
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _run_cells(cfg: RunConfig, tasks) -> list[dict]:
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_run_cell_args, tasks))
    rows = []
    for task in tasks:
        rows.append(run_cell(*task))
        log.info("%s", rows[-1]["status"])
    return rows


def _validate(cfg: RunConfig):
    """Resolve every reference once so a bad config fails before any solve."""
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    resolve_cycle(cfg)
    build_problem(cfg)


# --------------------------------------------------------------------------
# subcommands


def cmd_optimize(cfg: RunConfig, args) -> int:
    _validate(cfg)
    out = Path(cfg.out)
    row = run_cell(cfg, cfg.vehicle, cfg.map, cfg.distance, cfg.v_avg,
                   cfg.penalty_fraction or None, profile_dir=out / "profiles")
    report.atomic_write_text(out / "summary.csv", report.rows_csv([row]))
    print(report.rows_table([row]))
    return _row_exit_code([row])


def _sweep_tasks(cfg: RunConfig, out: Path):
    grid = cfg.sweep
    return [(cfg, vehicle, map_id, distance, v_avg, None, out / "profiles")
            for vehicle in sorted(grid.vehicles) for map_id in sorted(grid.maps)
            for v_avg in sorted(grid.speeds) for distance in sorted(grid.distances)]


def cmd_sweep(cfg: RunConfig, args) -> int:
    _validate(cfg)
    for map_id in cfg.sweep.maps:
        resolve_map(map_id)
    out = Path(cfg.out)
    rows = _run_cells(cfg, _sweep_tasks(cfg, out))
    report.atomic_write_text(out / "sweep.csv", report.rows_csv(rows))
    print(report.rows_table(rows))
    return _row_exit_code(rows)


def cmd_penalty_sweep(cfg: RunConfig, args) -> int:
    _validate(cfg)
    out = Path(cfg.out)
    tasks = [(cfg, cfg.vehicle, cfg.map, cfg.distance, cfg.v_avg, float(p), out / "profiles")
             for p in sorted(cfg.penalties)]
    rows = _run_cells(cfg, tasks)
    report.atomic_write_text(out / "penalty_sweep.csv",
                             report.rows_csv(rows, report.PENALTY_HEADER))
    print(report.rows_table(rows, report.PENALTY_HEADER))
    return _row_exit_code(rows)


def cmd_baseline(cfg: RunConfig, args) -> int:
    cycle = resolve_cycle(cfg)
    segments = baseline.split_segments(cycle)
    try:
        chosen, band = baseline.select_segments(segments, cfg.distance)
        profile = baseline.typical_profile(segments, cfg.distance, cfg.v_avg, cfg.dt)
    except baseline.BaselineDataError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    path = Path(cfg.out) / f"typical_x{cfg.distance:g}_v{cfg.v_avg:g}.csv"
    report.atomic_write_text(path, baseline.profile_to_csv(profile))
    print(f"{cycle.name}: {len(segments)} segments, {len(chosen)} within "
          f"+/-{100 * band:.0f}% of {cfg.distance:g} m; {len(profile)} samples -> {path}")
    return EXIT_OK


def cmd_map(cfg: RunConfig, args) -> int:
    surface = resolve_map(cfg.map)
    if args.n_omega < 2 or args.n_torque < 2:
        raise ConfigError("grid needs at least 2 points per axis")
    grid = efficiency.export_grid(surface, args.n_omega, args.n_torque)
    path = Path(cfg.out) / f"map_{Path(str(cfg.map)).stem}.csv"
    report.atomic_write_text(path, efficiency.grid_to_csv(grid))
    print(f"{surface.name}: {len(grid)} grid points, eta in "
          f"[{grid[:, 2].min():.3f}, {grid[:, 2].max():.3f}] -> {path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _common_flags(suppress: bool) -> argparse.ArgumentParser:
    # shared by the main parser and every subcommand so flags work in either position
    default = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, default=default, help="YAML run config")
    p.add_argument("--out", default=default, help="output directory")
    p.add_argument("--seed", type=int, default=default, help="restart RNG seed")
    p.add_argument("--workers", type=int, default=default, help="parallel sweep workers")
    p.add_argument("-v", "--verbose", action="store_true", default=default)
    return p


def _segment_flags(p: argparse.ArgumentParser):
    p.add_argument("--vehicle", help="vehicle id (type1, type2) or id in --vehicle-file")
    p.add_argument("--vehicle-file", help="YAML file with a 'vehicles' section")
    p.add_argument("--map", help="map id (type1..type5) or path to a map YAML")
    p.add_argument("--regen-map", help="separate map for regenerative braking")
    p.add_argument("--distance", type=float, help="stop-to-stop distance (m)")
    p.add_argument("--v-avg", type=float, help="average speed (m/s)")
    p.add_argument("--v-max", type=float, help="speed limit (m/s)")
    p.add_argument("--dt", type=float, help="sampling interval (s)")
    p.add_argument("--kappa", type=float, help="drive/regen blend half-width (J)")
    p.add_argument("--cycle", help="drive-cycle CSV (time_s,speed); FTP-75 by default")
    p.add_argument("--speed-unit", choices=("mph", "m_s"), help="speed unit of --cycle")


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="ecodrive", parents=[_common_flags(False)],
                                     description="Energy-optimal stop-to-stop speed profiles.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", parents=[common], help="solve one segment")
    _segment_flags(p)
    p.add_argument("--penalty", type=float, dest="penalty_fraction",
                   help="transient surcharge fraction")
    p.add_argument("--penalty-window", type=float, help="surcharge window (s)")
    p.add_argument("--penalty-threshold", type=float, help="torque-rise threshold (N m)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", parents=[common], help="solve a vehicle x map x X x v grid")
    _segment_flags(p)
    p.add_argument("--vehicles", nargs="+")
    p.add_argument("--maps", nargs="+")
    p.add_argument("--distances", nargs="+", type=float)
    p.add_argument("--speeds", nargs="+", type=float)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("penalty-sweep", parents=[common],
                       help="solve one segment for several surcharge fractions")
    _segment_flags(p)
    p.add_argument("--penalties", nargs="+", type=float)
    p.add_argument("--penalty-window", type=float)
    p.add_argument("--penalty-threshold", type=float)
    p.set_defaults(func=cmd_penalty_sweep, defaults=PENALTY_SWEEP_DEFAULTS)

    p = sub.add_parser("baseline", parents=[common], help="write a typical-traffic profile")
    _segment_flags(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("map", parents=[common], help="export an efficiency map grid")
    p.add_argument("--map", help="map id or path to a map YAML")
    p.add_argument("--n-omega", type=int, default=41)
    p.add_argument("--n-torque", type=int, default=41)
    p.set_defaults(func=cmd_map)
    return parser


OVERRIDE_KEYS = ("out", "seed", "workers", "vehicle", "vehicle_file", "map", "regen_map",
                 "distance", "v_avg", "v_max", "dt", "kappa", "cycle", "speed_unit",
                 "penalty_fraction", "penalty_window", "penalty_threshold", "penalties",
                 "vehicles", "maps", "distances", "speeds")


def config_from_args(args) -> RunConfig:
    defaults = getattr(args, "defaults", None)
    if args.config is not None:
        cfg = load_config(args.config, defaults)
    else:
        cfg = config_from_dict(dict(defaults or {}))
    overrides = {k: getattr(args, k, None) for k in OVERRIDE_KEYS}
    if overrides["penalties"] is not None:
        overrides["penalties"] = tuple(overrides["penalties"])
    try:
        return cfg.with_overrides(**overrides)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"ecodrive: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleSpecError as exc:
        print(f"ecodrive: infeasible segment: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
