"""Longitudinal vehicle model: parameters, wheel power and per-step wheel energy.

All quantities are SI. Energies are joules; the reporting layer converts to kWs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

# Clamp used when converting wheel energy to a force for map lookups.
V_FLOOR = 0.1  # m/s


@dataclass(frozen=True)
class VehicleParams:
    mass: float  # kg
    drag_area: float  # m^2, Cd * A
    max_acceleration: float  # m/s^2
    max_deceleration: float  # m/s^2, positive magnitude
    rotational_equivalent_mass: float = 0.0  # kg
    wheel_radius: float = 0.3  # m
    gear_ratio: float = 8.0
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.rotational_equivalent_mass < 0:
            raise ValueError("rotational_equivalent_mass must be >= 0")
        for attr in ("drag_area", "wheel_radius", "gear_ratio",
                     "max_acceleration", "max_deceleration"):
            if getattr(self, attr) <= 0:
                raise ValueError(f"{attr} must be positive, got {getattr(self, attr)}")

    @property
    def effective_mass(self) -> float:
        return self.mass + self.rotational_equivalent_mass


@dataclass(frozen=True)
class EnvironmentParams:
    air_density: float = 1.2  # kg/m^3
    rolling_coefficient: float = 0.01
    gravity: float = 9.81  # m/s^2

    def __post_init__(self):
        for attr in ("air_density", "rolling_coefficient", "gravity"):
            if getattr(self, attr) <= 0:
                raise ValueError(f"{attr} must be positive, got {getattr(self, attr)}")


@dataclass(frozen=True)
class SpeedProfile:
    """Uniformly sampled speeds v_1..v_N of a stop-to-stop run.

    The vehicle is implicitly at rest one step before the first sample and one
    step after the last one.
    """

    dt: float
    speeds: np.ndarray

    def __post_init__(self):
        speeds = np.asarray(self.speeds, dtype=float)
        if speeds.ndim != 1:
            raise ValueError("speeds must be one-dimensional")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if np.any(speeds < 0):
            raise ValueError("speeds must be non-negative")
        object.__setattr__(self, "speeds", speeds)

    def __len__(self) -> int:
        return len(self.speeds)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, len(self.speeds) + 1)

    def padded(self) -> np.ndarray:
        """Speeds with the implicit rest samples attached at both ends."""
        return np.concatenate(([0.0], self.speeds, [0.0]))


def _check_speed(v):
    if np.any(np.asarray(v) < 0):
        raise ValueError("speed must be non-negative")


def wheel_power(v, accel, vehicle: VehicleParams, env: EnvironmentParams = EnvironmentParams()):
    """Instantaneous tractive power at the wheels (W) on a flat road."""
    _check_speed(v)
    v = np.asarray(v, dtype=float)
    accel = np.asarray(accel, dtype=float)
    p = (vehicle.effective_mass * v * accel
         + 0.5 * vehicle.drag_area * env.air_density * v ** 3
         + vehicle.mass * env.gravity * env.rolling_coefficient * v)
    return p if p.ndim else float(p)


def wheel_energy_segment(v_n, v_next, dt: float, vehicle: VehicleParams,
                         env: EnvironmentParams = EnvironmentParams()):
    """Wheel energy (J) for one sampling step from ``v_n`` to ``v_next``.

    The inertial term is the kinetic-energy difference; drag and rolling
    losses are taken at the step's starting speed. Vectorised over arrays.
    """
    _check_speed(v_n)
    _check_speed(v_next)
    if dt <= 0:
        raise ValueError("dt must be positive")
    v_n = np.asarray(v_n, dtype=float)
    v_next = np.asarray(v_next, dtype=float)
    e = (0.5 * vehicle.effective_mass * (v_next ** 2 - v_n ** 2)
         + 0.5 * vehicle.drag_area * env.air_density * v_n ** 3 * dt
         + vehicle.mass * env.gravity * env.rolling_coefficient * v_n * dt)
    return e if e.ndim else float(e)


def profile_distance(profile: SpeedProfile) -> float:
    return float(profile.dt * np.sum(profile.speeds))


def motor_operating_point(v, wheel_force, vehicle: VehicleParams):
    """Map road speed and tractive force to motor speed (rad/s) and torque (N m)."""
    omega = np.asarray(v, dtype=float) * vehicle.gear_ratio / vehicle.wheel_radius
    torque = np.asarray(wheel_force, dtype=float) * vehicle.wheel_radius / vehicle.gear_ratio
    if omega.ndim == 0 and torque.ndim == 0:
        return float(omega), float(torque)
    return omega, torque


def wheel_force_from_energy(e_wheel, v, dt: float):
    """Average tractive force over a step, with speed clamped at ``V_FLOOR``."""
    return np.asarray(e_wheel, dtype=float) / (np.maximum(np.asarray(v, dtype=float), V_FLOOR) * dt)


def _from_mapping(cls, data: dict, **extra):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    return cls(**{k: float(v) if k != "name" else v for k, v in data.items()}, **extra)


def vehicle_from_dict(data: dict, name: str | None = None) -> VehicleParams:
    data = dict(data)
    if name is not None:
        data.setdefault("name", name)
    return _from_mapping(VehicleParams, data)


def environment_from_dict(data: dict | None) -> EnvironmentParams:
    return _from_mapping(EnvironmentParams, data or {})


def parse_vehicle_config(text: str):
    """Parse a config with ``vehicles`` and optional ``environment`` sections.

    Returns ``(vehicles_by_id, environment)``.
    """
    raw = yaml.safe_load(text) or {}
    if not isinstance(raw, dict) or "vehicles" not in raw:
        raise ValueError("vehicle config needs a 'vehicles' section")
    vehicles = {str(k): vehicle_from_dict(v, name=str(k)) for k, v in raw["vehicles"].items()}
    return vehicles, environment_from_dict(raw.get("environment"))


def load_vehicle_config(path):
    return parse_vehicle_config(Path(path).read_text())


def catalog():
    """The bundled parameter sets (``type1``, ``type2``) and default environment."""
    return parse_vehicle_config(
        resources.files("ecodrive.data").joinpath("vehicles.yaml").read_text())


def get_vehicle(vehicle_id) -> VehicleParams:
    vehicles, _ = catalog()
    key = str(vehicle_id)
    if key.isdigit():
        key = f"type{key}"
    try:
        return vehicles[key]
    except KeyError:
        raise KeyError(f"unknown vehicle {vehicle_id!r}; known: {', '.join(vehicles)}") from None
