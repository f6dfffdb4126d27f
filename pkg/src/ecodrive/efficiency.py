"""Separable powertrain efficiency surfaces eta(omega, T).

A map is the product of a motor-speed spline and a torque spline, clamped to
``[eta_floor, 1]``. Both splines are cubic interpolants with zero end slopes,
so the surface is C1 wherever no clamp is active.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from scipy.interpolate import CubicSpline

DEFAULT_ETA_FLOOR = 0.02
MAP_IDS = ("type1", "type2", "type3", "type4", "type5")
GRID_HEADER = ("omega_rad_s", "torque_Nm", "eta")


@dataclass(frozen=True)
class SplineCurve:
    knots: tuple
    values: tuple

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        values = tuple(float(v) for v in self.values)
        if len(knots) != len(values):
            raise ValueError("knots and values must have the same length")
        if len(knots) < 2:
            raise ValueError("a spline needs at least two knots")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if min(values) < 0 or max(values) > 1:
            raise ValueError("spline values must lie in [0, 1]")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value: float, lo: float, hi: float) -> "SplineCurve":
        return cls((lo, hi), (value, value))

    @cached_property
    def _spline(self) -> CubicSpline:
        return CubicSpline(self.knots, self.values, bc_type="clamped")

    @cached_property
    def piecewise(self) -> tuple[np.ndarray, np.ndarray]:
        """Breakpoints and per-interval cubic coefficients (highest power first)."""
        return np.ascontiguousarray(self._spline.x), np.ascontiguousarray(self._spline.c)

    @property
    def domain(self) -> tuple[float, float]:
        return self.knots[0], self.knots[-1]

    def value_and_slope(self, x):
        """Spline value clamped to [0, 1] and its derivative (0 where clamped)."""
        lo, hi = self.domain
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, lo, hi)
        raw = self._spline(xc)
        slope = self._spline(xc, 1)
        slope = np.where((x < lo) | (x > hi) | (raw < 0) | (raw > 1), 0.0, slope)
        return np.clip(raw, 0.0, 1.0), slope

    def __call__(self, x):
        return self.value_and_slope(x)[0]


@dataclass(frozen=True)
class EfficiencyMap:
    """Combined source-to-wheel efficiency, indexed by motor speed and torque.

    Negative torque is the regenerative branch of the same surface.
    """

    speed_spline: SplineCurve
    torque_spline: SplineCurve
    eta_floor: float = DEFAULT_ETA_FLOOR
    name: str = "custom"

    def __post_init__(self):
        if not 0 < self.eta_floor <= 1:
            raise ValueError("eta_floor must lie in (0, 1]")

    @property
    def omega_max(self) -> float:
        return self.speed_spline.domain[1]

    @property
    def torque_max(self) -> float:
        return self.torque_spline.domain[1]

    @cached_property
    def kernel_arrays(self) -> tuple:
        return (*self.speed_spline.piecewise, *self.torque_spline.piecewise, float(self.eta_floor))

    def eval_with_grad(self, omega, torque):
        """Return (eta, d eta/d omega, d eta/d torque), elementwise."""
        s, ds = self.speed_spline.value_and_slope(omega)
        q, dq = self.torque_spline.value_and_slope(torque)
        raw = s * q
        clamped = (raw < self.eta_floor) | (raw > 1.0)
        eta = np.clip(raw, self.eta_floor, 1.0)
        d_omega = np.where(clamped, 0.0, ds * q)
        d_torque = np.where(clamped, 0.0, s * dq)
        return eta, d_omega, d_torque

    def eval(self, omega, torque):
        eta = self.eval_with_grad(omega, torque)[0]
        return eta if np.ndim(eta) else float(eta)

    __call__ = eval

    @classmethod
    def constant(cls, eta: float, omega_max: float = 1000.0, torque_max: float = 300.0,
                 name: str | None = None) -> "EfficiencyMap":
        return cls(SplineCurve.constant(1.0, 0.0, omega_max),
                   SplineCurve.constant(eta, -torque_max, torque_max),
                   eta_floor=min(DEFAULT_ETA_FLOOR, eta),
                   name=name or f"const{eta:g}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "eta_floor": self.eta_floor,
            "speed": {"knots": list(self.speed_spline.knots),
                      "values": list(self.speed_spline.values)},
            "torque": {"knots": list(self.torque_spline.knots),
                       "values": list(self.torque_spline.values)},
        }


@dataclass(frozen=True)
class PowertrainEfficiency:
    """Forward and regenerative surfaces. Usually both are the same map."""

    forward: EfficiencyMap
    regen: EfficiencyMap

    @classmethod
    def single(cls, surface: EfficiencyMap) -> "PowertrainEfficiency":
        return cls(surface, surface)

    @property
    def name(self) -> str:
        if self.forward is self.regen:
            return self.forward.name
        return f"{self.forward.name}/{self.regen.name}"


def map_from_dict(data: dict, name: str | None = None) -> EfficiencyMap:
    """Build a map from a parsed definition.

    Either give ``speed``/``torque`` knot tables explicitly, or give
    ``omega_max``/``torque_max`` and knot tables in normalised coordinates
    (``speed_frac`` in [0, 1], ``torque_frac`` in [-1, 1]).
    """
    floor = float(data.get("eta_floor", DEFAULT_ETA_FLOOR))
    name = name or data.get("name", "custom")
    if "speed" in data:
        speed = SplineCurve(data["speed"]["knots"], data["speed"]["values"])
        torque = SplineCurve(data["torque"]["knots"], data["torque"]["values"])
    else:
        w_max = float(data.get("omega_max", 1000.0))
        t_max = float(data.get("torque_max", 300.0))
        speed = SplineCurve([w_max * f for f in data["speed_frac"]["knots"]],
                            data["speed_frac"]["values"])
        torque = SplineCurve([t_max * f for f in data["torque_frac"]["knots"]],
                             data["torque_frac"]["values"])
    return EfficiencyMap(speed, torque, eta_floor=floor, name=name)


def _catalog_text() -> str:
    return resources.files("ecodrive.data").joinpath("maps.yaml").read_text()


def catalog() -> dict[str, EfficiencyMap]:
    """The five canonical hypothetical maps, keyed ``type1`` .. ``type5``."""
    raw = yaml.safe_load(_catalog_text())
    return {key: map_from_dict(spec, name=key) for key, spec in raw["maps"].items()}


def get_map(map_id: str) -> EfficiencyMap:
    maps = catalog()
    key = str(map_id)
    if key.isdigit():
        key = f"type{key}"
    try:
        return maps[key]
    except KeyError:
        raise KeyError(f"unknown map {map_id!r}; known: {', '.join(maps)}") from None


def load_map(path) -> EfficiencyMap:
    path = Path(path)
    data = yaml.safe_load(path.read_text())
    return map_from_dict(data, name=data.get("name", path.stem))


def battery_energy_segment(e_wheel, eta_frw, eta_reg):
    """Battery-side energy of one step: divide by eta when driving, multiply when recovering."""
    eta_frw = np.asarray(eta_frw, dtype=float)
    eta_reg = np.asarray(eta_reg, dtype=float)
    if np.any(eta_frw <= 0) or np.any(eta_reg <= 0) or np.any(eta_frw > 1) or np.any(eta_reg > 1):
        raise ValueError("efficiencies must lie in (0, 1]")
    e = np.asarray(e_wheel, dtype=float)
    out = np.where(e >= 0, e / eta_frw, e * eta_reg)
    return out if out.ndim else float(out)


def export_grid(surface: EfficiencyMap, n_omega: int, n_torque: int) -> np.ndarray:
    """Uniform (omega, T, eta) grid over the map domain, one row per point.

    Rows are ordered torque-major: all speeds for the first torque, then the
    next torque.
    """
    if n_omega < 2 or n_torque < 2:
        raise ValueError("grid needs at least two points per axis")
    omegas = np.linspace(*surface.speed_spline.domain, n_omega)
    torques = np.linspace(*surface.torque_spline.domain, n_torque)
    tt, ww = np.meshgrid(torques, omegas, indexing="ij")
    eta = surface.eval_with_grad(ww, tt)[0]
    return np.column_stack([ww.ravel(), tt.ravel(), eta.ravel()])


def grid_to_csv(grid: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GRID_HEADER)
    for w, t, e in grid:
        writer.writerow([f"{w:.6f}", f"{t:.6f}", f"{e:.6f}"])
    return buf.getvalue()
