"""Surcharge on battery energy right after the wheel torque rises.

Each torque increase larger than ``increase_threshold`` opens a window of
``window`` seconds during which positive battery-energy samples cost
``(1 + penalty_fraction)`` times their value. Overlapping windows do not stack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Width of the logistic used to smooth event detection inside the optimiser.
SMOOTH_WIDTH = 0.5  # N m


@dataclass(frozen=True)
class TransientPenalty:
    penalty_fraction: float = 0.0
    window: float = 1.0  # s
    increase_threshold: float = 1.0  # N m

    def __post_init__(self):
        if self.penalty_fraction < 0:
            raise ValueError("penalty_fraction must be >= 0")
        if self.window <= 0:
            raise ValueError("window must be positive")
        if self.increase_threshold < 0:
            raise ValueError("increase_threshold must be >= 0")

    def window_samples(self, dt: float) -> int:
        return max(1, math.ceil(self.window / dt - 1e-9))


def torque_increase_events(torques, threshold: float) -> np.ndarray:
    """Boolean mask of samples whose torque rose by more than ``threshold``.

    The sample before the first one is taken to be at rest (zero torque).
    """
    torques = np.asarray(torques, dtype=float)
    rise = np.diff(torques, prepend=0.0)
    return rise > threshold


def penalized_mask(torques, dt: float, penalty: TransientPenalty) -> np.ndarray:
    events = torque_increase_events(torques, penalty.increase_threshold)
    covered = np.zeros(len(events), dtype=bool)
    width = penalty.window_samples(dt)
    for n in np.flatnonzero(events):
        covered[n:n + width] = True
    return covered


def penalized_samples(e_bat, torques, dt: float, penalty: TransientPenalty) -> np.ndarray:
    e_bat = np.asarray(e_bat, dtype=float)
    if len(e_bat) != len(torques):
        raise ValueError("torques must be aligned with the energy samples")
    hit = penalized_mask(torques, dt, penalty) & (e_bat >= 0)
    return np.where(hit, (1.0 + penalty.penalty_fraction) * e_bat, e_bat)


def penalized_energy(breakdown, torques, penalty: TransientPenalty) -> float:
    """Total battery energy (J) of ``breakdown`` with the transient surcharge applied."""
    return float(np.sum(penalized_samples(breakdown.e_bat, torques, breakdown.dt, penalty)))


def smooth_penalty(positive, torques, dt: float, penalty: TransientPenalty):
    """Differentiable surrogate of the surcharge used by the optimiser.

    ``positive`` is the forward-branch part of each battery-energy sample.
    Returns ``(value, d/d positive, d/d torques)``.
    """
    positive = np.asarray(positive, dtype=float)
    torques = np.asarray(torques, dtype=float)
    n = len(positive)
    p = penalty.penalty_fraction
    if p == 0 or n == 0:
        return 0.0, np.zeros(n), np.zeros(n)

    rise = np.diff(torques, prepend=0.0)
    z = np.clip((rise - penalty.increase_threshold) / SMOOTH_WIDTH, -60.0, 60.0)
    ind = 1.0 / (1.0 + np.exp(-z))
    d_ind = ind * (1.0 - ind) / SMOOTH_WIDTH
    miss = 1.0 - ind

    width = penalty.window_samples(dt)
    # uncovered[k] = prod of (1 - ind[j]) over events j whose window reaches k
    uncovered = np.ones(n)
    for lag in range(width):
        uncovered[lag:] *= miss[:n - lag]
    covered = 1.0 - uncovered

    value = p * float(np.dot(covered, positive))
    d_pos = p * covered

    d_ind_total = np.zeros(n)
    for lag in range(width):
        # sample k = j + lag sees event j; d uncovered[k]/d ind[j] = -prod over the others
        k = np.arange(lag, n)
        j = k - lag
        others = np.ones(len(k))
        for lag2 in range(width):
            if lag2 == lag:
                continue
            jj = k - lag2
            ok = jj >= 0
            others[ok] *= miss[jj[ok]]
        d_ind_total[j] += p * positive[k] * others
    g_rise = d_ind_total * d_ind
    d_torque = g_rise.copy()
    d_torque[:-1] -= g_rise[1:]
    return value, d_pos, d_torque
