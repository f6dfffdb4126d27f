import numpy as np
import pytest
from hypothesis import given, strategies as st

from ecodrive.transient import (TransientPenalty, penalized_energy, penalized_mask,
                                penalized_samples, smooth_penalty, torque_increase_events)


class Breakdown:
    def __init__(self, e_bat, dt=1.0):
        self.e_bat = np.asarray(e_bat, dtype=float)
        self.dt = dt


def test_zero_fraction_is_identity():
    e = [50.0, 80.0, -20.0, 30.0]
    tq = [0.0, 40.0, 10.0, 60.0]
    assert penalized_energy(Breakdown(e), tq, TransientPenalty(0.0)) == sum(e)


def test_constant_torque_is_identity():
    # first sample jumps from rest, so start at zero torque
    e = [10.0, 20.0, 30.0]
    assert penalized_energy(Breakdown(e), [0.0, 0.0, 0.0], TransientPenalty(0.3)) == 60.0


def test_single_increase_example():
    e = np.zeros(10)
    e[5] = 100.0
    tq = np.zeros(10)
    tq[5:] = 20.0
    out = penalized_samples(e, tq, 1.0, TransientPenalty(0.15, window=1.0))
    assert out[5] == pytest.approx(115.0)
    assert penalized_energy(Breakdown(e), tq, TransientPenalty(0.15)) == pytest.approx(115.0)


def test_regen_samples_not_penalized():
    e = [-100.0, 50.0]
    tq = [5.0, 10.0]
    assert penalized_samples(e, tq, 1.0, TransientPenalty(0.5)).tolist() == [-100.0, 75.0]


def test_threshold_filters_jitter():
    assert not torque_increase_events([0.0, 0.5, 1.0, 1.4], 1.0).any()
    assert torque_increase_events([0.0, 0.5, 2.0], 1.0).tolist() == [False, False, True]


def test_window_covers_following_samples_without_stacking():
    tq = [0, 10, 20, 20, 20, 20]
    mask = penalized_mask(tq, 0.5, TransientPenalty(0.3, window=1.0))
    assert mask.tolist() == [False, True, True, True, False, False]
    e = np.full(6, 10.0)
    assert penalized_samples(e, tq, 0.5, TransientPenalty(0.3)).tolist() == [
        10.0, 13.0, 13.0, 13.0, 10.0, 10.0]


def test_invalid_penalty_rejected():
    with pytest.raises(ValueError):
        TransientPenalty(-0.1)
    with pytest.raises(ValueError):
        TransientPenalty(0.1, window=0)
    with pytest.raises(ValueError):
        TransientPenalty(0.1, increase_threshold=-1)
    with pytest.raises(ValueError):
        penalized_samples([1.0, 2.0], [0.0], 1.0, TransientPenalty(0.1))


profiles = st.integers(2, 25).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-500, 500), min_size=n, max_size=n),
    st.lists(st.floats(-200, 200), min_size=n, max_size=n)))


@given(profiles, st.floats(0, 1), st.floats(0, 1))
def test_monotone_in_fraction(prof, p1, p2):
    e, tq = prof
    lo, hi = sorted((p1, p2))
    a = penalized_energy(Breakdown(e), tq, TransientPenalty(lo))
    b = penalized_energy(Breakdown(e), tq, TransientPenalty(hi))
    assert a <= b + 1e-9


@given(profiles, st.floats(0.01, 1))
def test_smooth_surrogate_tracks_exact_rule(prof, p):
    e, tq = prof
    e = np.abs(e)
    # rises are multiples of 10 N m, at least 10 logistic widths from a 15 N m threshold
    tq = np.round(np.asarray(tq) / 10) * 10
    pen = TransientPenalty(p, increase_threshold=15.0)
    exact = penalized_energy(Breakdown(e), tq, pen) - e.sum()
    value, _, _ = smooth_penalty(e, tq, 1.0, pen)
    assert value == pytest.approx(exact, rel=1e-3, abs=1e-3 * p * e.sum() + 1e-9)


def test_smooth_surrogate_gradient():
    rng = np.random.default_rng(3)
    e = rng.uniform(0, 100, 12)
    tq = rng.uniform(-5, 5, 12).cumsum()
    pen = TransientPenalty(0.3, window=2.0)
    _, d_pos, d_tq = smooth_penalty(e, tq, 1.0, pen)
    h = 1e-6
    for k in range(12):
        step = np.zeros(12)
        step[k] = h
        fd_e = (smooth_penalty(e + step, tq, 1.0, pen)[0]
                - smooth_penalty(e - step, tq, 1.0, pen)[0]) / (2 * h)
        fd_t = (smooth_penalty(e, tq + step, 1.0, pen)[0]
                - smooth_penalty(e, tq - step, 1.0, pen)[0]) / (2 * h)
        assert d_pos[k] == pytest.approx(fd_e, rel=1e-5, abs=1e-7)
        assert d_tq[k] == pytest.approx(fd_t, rel=1e-5, abs=1e-6)
