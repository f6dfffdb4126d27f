"""Typical-traffic baselines synthesised from standard drive cycles.

A cycle is cut into stop-to-stop segments; the segments whose length is close
to the target distance are normalised in time and speed, averaged, and then
rescaled to the requested distance and average speed.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .vehicle import SpeedProfile

MPH_TO_MPS = 0.44704
DEFAULT_ZERO_EPS = 0.1  # m/s
SELECTION_BANDS = (0.2, 0.3, 0.5)
MIN_SEGMENT_SAMPLES = 3


class BaselineDataError(ValueError):
    """No drive-cycle segment is close enough to the requested distance."""


@dataclass(frozen=True)
class DriveCycle:
    dt: float
    speeds: np.ndarray
    name: str = "cycle"

    def __post_init__(self):
        speeds = np.asarray(self.speeds, dtype=float)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if np.any(speeds < 0):
            raise ValueError("cycle speeds must be non-negative")
        object.__setattr__(self, "speeds", speeds)


@dataclass(frozen=True)
class StopSegment:
    speeds: np.ndarray
    dt: float
    start_index: int = 0

    @property
    def distance(self) -> float:
        return float(self.dt * np.sum(self.speeds))

    @property
    def duration(self) -> float:
        return self.dt * len(self.speeds)


def read_cycle_csv(text: str, speed_unit: str = "mph", name: str = "cycle") -> DriveCycle:
    """Parse a ``time_s,speed`` CSV. ``speed_unit`` is ``mph`` or ``m_s``."""
    if speed_unit not in ("mph", "m_s"):
        raise ValueError(f"speed_unit must be 'mph' or 'm_s', got {speed_unit!r}")
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not {"time_s", "speed"} <= set(reader.fieldnames):
        raise ValueError("drive-cycle CSV needs a 'time_s,speed' header")
    times, speeds = [], []
    for row in reader:
        times.append(float(row["time_s"]))
        speeds.append(float(row["speed"]))
    times = np.asarray(times)
    if len(times) < 2:
        raise ValueError("drive cycle needs at least two samples")
    steps = np.diff(times)
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-6):
        raise ValueError("drive cycle must be uniformly sampled")
    speeds = np.asarray(speeds)
    if speed_unit == "mph":
        speeds = speeds * MPH_TO_MPS
    return DriveCycle(float(steps[0]), np.clip(speeds, 0.0, None), name=name)


def load_cycle(path, speed_unit: str = "mph") -> DriveCycle:
    path = Path(path)
    return read_cycle_csv(path.read_text(), speed_unit, name=path.stem)


def ftp75() -> DriveCycle:
    """The bundled FTP-75 cycle (1 Hz, converted to m/s)."""
    text = resources.files("ecodrive.data").joinpath("ftp75.csv").read_text()
    return read_cycle_csv(text, "mph", name="ftp75")


def split_segments(cycle: DriveCycle, zero_eps: float = DEFAULT_ZERO_EPS) -> list[StopSegment]:
    """Maximal runs of moving samples that have a stopped sample on both sides.

    Runs shorter than three samples are dropped, as are runs touching either
    end of the cycle.
    """
    v = cycle.speeds
    moving = v > zero_eps
    segments = []
    n = len(v)
    i = 0
    while i < n:
        if not moving[i]:
            i += 1
            continue
        j = i
        while j < n and moving[j]:
            j += 1
        if i > 0 and j < n and j - i >= MIN_SEGMENT_SAMPLES:
            segments.append(StopSegment(v[i:j].copy(), cycle.dt, start_index=i))
        i = j
    return segments


def select_segments(segments, distance: float, bands=SELECTION_BANDS):
    """Segments within the narrowest tolerance band that has any match.

    Returns ``(selected, band)``.
    """
    for band in bands:
        chosen = [s for s in segments
                  if (1 - band) * distance <= s.distance <= (1 + band) * distance]
        if chosen:
            return chosen, band
    raise BaselineDataError(
        f"no segment within +/-{100 * bands[-1]:.0f}% of {distance:g} m "
        f"(widest band tried: {(1 - bands[-1]) * distance:g}-{(1 + bands[-1]) * distance:g} m)")


def _normalised_shape(segment: StopSegment, n_samples: int) -> np.ndarray:
    # Stops sit at normalised times 0 and 1; output samples are the interior points.
    shape = np.concatenate(([0.0], segment.speeds, [0.0]))
    src_t = np.linspace(0.0, 1.0, len(shape))
    dst_t = np.arange(1, n_samples + 1) / (n_samples + 1)
    resampled = np.interp(dst_t, src_t, shape)
    return resampled / resampled.mean()


def horizon(distance: float, v_avg: float, dt: float) -> int:
    return max(int(round(distance / v_avg / dt)), 1)


def typical_profile(segments, distance: float, v_avg: float, dt: float = 1.0,
                    n_samples: int | None = None, bands=SELECTION_BANDS) -> SpeedProfile:
    """Average normalised shape of the nearby segments, rescaled to ``distance``.

    With ``n_samples`` omitted the horizon is ``round(distance / v_avg / dt)``,
    matching the optimiser's discretisation.
    """
    if distance <= 0 or v_avg <= 0:
        raise ValueError("distance and v_avg must be positive")
    if n_samples is None:
        n_samples = horizon(distance, v_avg, dt)
    chosen, _ = select_segments(segments, distance, bands)
    mean_shape = np.mean([_normalised_shape(s, n_samples) for s in chosen], axis=0)
    speeds = mean_shape * (distance / (dt * mean_shape.sum()))
    return SpeedProfile(dt, speeds)


def ftp75_profile(distance: float, v_avg: float, dt: float = 1.0) -> SpeedProfile:
    return typical_profile(split_segments(ftp75()), distance, v_avg, dt)


def profile_to_csv(profile: SpeedProfile) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t_s", "v_mps"])
    for t, v in zip(profile.times, profile.speeds):
        writer.writerow([repr(float(t)), repr(float(v))])
    return buf.getvalue()


def profile_from_csv(text: str) -> SpeedProfile:
    """Inverse of :func:`profile_to_csv`.

    Result CSVs, which start with the rest sample at ``t = 0``, are accepted too.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not {"t_s", "v_mps"} <= set(reader.fieldnames):
        raise ValueError("profile CSV needs 't_s' and 'v_mps' columns")
    rows = [(float(row["t_s"]), float(row["v_mps"])) for row in reader]
    if rows and rows[0][0] == 0.0:
        if rows[0][1] != 0.0:
            raise ValueError("sample at t = 0 must be at rest")
        rows = rows[1:]
    if not rows:
        raise ValueError("profile CSV has no samples")
    t = np.array([r[0] for r in rows])
    dt = float(t[0])
    if dt <= 0 or not np.allclose(t, dt * np.arange(1, len(t) + 1), rtol=1e-9, atol=0):
        raise ValueError("profile CSV must be sampled at t = dt, 2 dt, ...")
    return SpeedProfile(dt, np.array([r[1] for r in rows]))
