"""Run configuration: YAML file plus command-line overrides.

Every reference (vehicle id or file, map id or file, drive cycle) is resolved
before any solve starts, so a bad config fails fast and writes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from . import baseline, efficiency, vehicle
from .efficiency import PowertrainEfficiency
from .optimizer import DEFAULT_KAPPA, NlpProblem, SegmentSpec, SolverOptions
from .transient import TransientPenalty


class ConfigError(ValueError):
    """Invalid or unresolvable run configuration."""


@dataclass(frozen=True)
class SweepGrid:
    vehicles: tuple = ("type1", "type2")
    maps: tuple = efficiency.MAP_IDS
    distances: tuple = (210.0, 350.0, 700.0, 2100.0)
    speeds: tuple = (7.0, 10.0)


@dataclass(frozen=True)
class RunConfig:
    vehicle: object = "type1"  # catalog id or inline parameter mapping
    vehicle_file: str | None = None  # YAML with a 'vehicles' section
    map: str = "type1"  # catalog id or path to a map file
    regen_map: str | None = None  # optional separate regenerative surface
    distance: float = 350.0  # m
    v_avg: float = 7.0  # m/s
    v_max: float = 20.0  # m/s
    dt: float = 1.0  # s
    kappa: float = DEFAULT_KAPPA  # J
    penalty_fraction: float = 0.0
    penalty_window: float = 1.0  # s
    penalty_threshold: float = 1.0  # N m
    penalties: tuple = (0.0, 0.10, 0.15, 0.30)
    cycle: str | None = None  # drive-cycle CSV, bundled FTP-75 when unset
    speed_unit: str = "mph"
    environment: dict = field(default_factory=dict)
    out: str = "results"
    seed: int = 0
    workers: int = 1
    n_restarts: int = 3
    sweep: SweepGrid = SweepGrid()

    def with_overrides(self, **overrides) -> "RunConfig":
        """Apply non-None overrides (typically parsed CLI flags)."""
        clean = {k: v for k, v in overrides.items() if v is not None}
        sweep_keys = {f.name for f in fields(SweepGrid)}
        grid = {k: tuple(clean.pop(k)) for k in list(clean) if k in sweep_keys}
        cfg = replace(self, **clean) if clean else self
        if grid:
            cfg = replace(cfg, sweep=replace(cfg.sweep, **grid))
        return cfg


def _as_tuple(value, cast=str):
    if isinstance(value, (list, tuple)):
        return tuple(cast(v) for v in value)
    return (cast(value),)


def config_from_dict(data: dict, base_dir: Path | None = None) -> RunConfig:
    data = dict(data or {})
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    grid = data.pop("sweep", None) or {}
    bad = set(grid) - {f.name for f in fields(SweepGrid)}
    if bad:
        raise ConfigError(f"unknown sweep keys: {', '.join(sorted(bad))}")
    sweep = SweepGrid(**{k: _as_tuple(v, float if k in ("distances", "speeds") else str)
                         for k, v in grid.items()})
    if "penalties" in data:
        data["penalties"] = _as_tuple(data["penalties"], float)
    # relative paths in a config file are relative to that file
    if base_dir is not None:
        for key in ("vehicle_file", "cycle"):
            if data.get(key):
                data[key] = str(base_dir / data[key])
        for key in ("map", "regen_map"):
            value = data.get(key)
            if value and (base_dir / str(value)).exists():
                data[key] = str(base_dir / str(value))
    try:
        return RunConfig(sweep=sweep, **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, defaults: dict | None = None) -> RunConfig:
    """Read a YAML run config; keys it leaves out fall back to ``defaults``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict({**(defaults or {}), **(data or {})}, base_dir=path.parent)


def resolve_vehicle(cfg: RunConfig, vehicle_ref=None) -> vehicle.VehicleParams:
    ref = cfg.vehicle if vehicle_ref is None else vehicle_ref
    try:
        if isinstance(ref, dict):
            return vehicle.vehicle_from_dict(ref, name=ref.get("name", "inline"))
        if cfg.vehicle_file:
            path = Path(cfg.vehicle_file)
            if not path.is_file():
                raise ConfigError(f"vehicle file not found: {path}")
            vehicles, _ = vehicle.load_vehicle_config(path)
            key = str(ref)
            if key not in vehicles and key.isdigit():
                key = f"type{key}"
            if key not in vehicles:
                raise ConfigError(f"vehicle {ref!r} not in {path}")
            return vehicles[key]
        return vehicle.get_vehicle(ref)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"vehicle {ref!r}: {exc}") from None


def resolve_environment(cfg: RunConfig) -> vehicle.EnvironmentParams:
    try:
        if cfg.environment:
            return vehicle.environment_from_dict(cfg.environment)
        if cfg.vehicle_file and Path(cfg.vehicle_file).is_file():
            return vehicle.load_vehicle_config(cfg.vehicle_file)[1]
        return vehicle.catalog()[1]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"environment: {exc}") from None


def resolve_map(ref: str) -> efficiency.EfficiencyMap:
    ref = str(ref)
    path = Path(ref)
    if path.suffix in (".yaml", ".yml") or path.is_file() or "/" in ref:
        if not path.is_file():
            raise ConfigError(f"map file not found: {path}")
        try:
            return efficiency.load_map(path)
        except (KeyError, TypeError, ValueError, yaml.YAMLError) as exc:
            raise ConfigError(f"bad map file {path}: {exc}") from None
    try:
        return efficiency.get_map(ref)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None


def resolve_efficiency(cfg: RunConfig, map_ref=None) -> PowertrainEfficiency:
    forward = resolve_map(cfg.map if map_ref is None else map_ref)
    if cfg.regen_map:
        return PowertrainEfficiency(forward, resolve_map(cfg.regen_map))
    return PowertrainEfficiency.single(forward)


def resolve_cycle(cfg: RunConfig) -> baseline.DriveCycle:
    if cfg.cycle is None:
        return baseline.ftp75()
    path = Path(cfg.cycle)
    if not path.is_file():
        raise ConfigError(f"drive-cycle file not found: {path}")
    try:
        return baseline.load_cycle(path, cfg.speed_unit)
    except ValueError as exc:
        raise ConfigError(f"bad drive cycle {path}: {exc}") from None


def resolve_spec(cfg: RunConfig, distance=None, v_avg=None) -> SegmentSpec:
    try:
        return SegmentSpec(float(cfg.distance if distance is None else distance),
                           float(cfg.v_avg if v_avg is None else v_avg),
                           float(cfg.v_max), float(cfg.dt))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def resolve_penalty(cfg: RunConfig, fraction=None) -> TransientPenalty | None:
    p = cfg.penalty_fraction if fraction is None else fraction
    try:
        penalty = TransientPenalty(float(p), float(cfg.penalty_window),
                                   float(cfg.penalty_threshold))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return penalty if penalty.penalty_fraction > 0 else None


def build_problem(cfg: RunConfig, *, vehicle_ref=None, map_ref=None, distance=None,
                  v_avg=None, penalty_fraction=None) -> NlpProblem:
    if cfg.kappa < 0:
        raise ConfigError("kappa must be >= 0")
    return NlpProblem(resolve_spec(cfg, distance, v_avg),
                      resolve_vehicle(cfg, vehicle_ref),
                      resolve_efficiency(cfg, map_ref),
                      resolve_environment(cfg),
                      resolve_penalty(cfg, penalty_fraction),
                      kappa=float(cfg.kappa))


def solver_options(cfg: RunConfig) -> SolverOptions:
    if cfg.n_restarts < 0:
        raise ConfigError("n_restarts must be >= 0")
    return SolverOptions(seed=int(cfg.seed), n_restarts=int(cfg.n_restarts))
