"""Compiled per-step energy kernel used inside the optimiser loop.

Mirrors the numpy step model in :mod:`ecodrive.optimizer` (which stays the
reference implementation) but fuses the spline lookups, battery conversion
and analytic partials into a single pass.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _spline(x, breaks, coeffs):
    # piecewise cubic in local coordinates, clamped to its domain and to [0, 1]
    lo = breaks[0]
    hi = breaks[-1]
    outside = x < lo or x > hi
    xc = min(max(x, lo), hi)
    k = np.searchsorted(breaks, xc, side="right") - 1
    if k > len(breaks) - 2:
        k = len(breaks) - 2
    if k < 0:
        k = 0
    h = xc - breaks[k]
    c0, c1, c2, c3 = coeffs[0, k], coeffs[1, k], coeffs[2, k], coeffs[3, k]
    val = ((c0 * h + c1) * h + c2) * h + c3
    slope = (3.0 * c0 * h + 2.0 * c1) * h + c2
    if outside or val < 0.0 or val > 1.0:
        slope = 0.0
    return min(max(val, 0.0), 1.0), slope


@njit(cache=True)
def _surface(omega, torque, sb, sc, tb, tc, floor):
    s, ds = _spline(omega, sb, sc)
    q, dq = _spline(torque, tb, tc)
    raw = s * q
    if raw < floor:
        return floor, 0.0, 0.0
    if raw > 1.0:
        return 1.0, 0.0, 0.0
    return raw, ds * q, s * dq


@njit(cache=True)
def step_kernel(vv, dt, m_eff, c_drag, c_roll, k_torque, k_omega, v_floor, kappa,
                fsb, fsc, ftb, ftc, f_floor, rsb, rsc, rtb, rtc, r_floor):
    """Battery energy of every step ``vv[j] -> vv[j+1]`` and its partials.

    Returns a (9, n_steps) array with rows: battery energy, forward-branch
    part, torque, then the partials w.r.t. the start speed ``a`` and end
    speed ``b`` of battery energy, forward part and torque.
    """
    n = len(vv) - 1
    out = np.empty((9, n))
    for j in range(n):
        a = vv[j]
        b = vv[j + 1]
        e = 0.5 * m_eff * (b * b - a * a) + c_drag * a * a * a * dt + c_roll * a * dt
        v_mid = 0.5 * (a + b)
        if v_mid > v_floor:
            v_op = v_mid
            dvop = 0.5
        else:
            v_op = v_floor
            dvop = 0.0
        torque = k_torque * e / v_op
        omega = k_omega * v_mid

        eta_f, fw, ft = _surface(omega, torque, fsb, fsc, ftb, ftc, f_floor)
        eta_r, rw, rt = _surface(omega, torque, rsb, rsc, rtb, rtc, r_floor)

        if kappa == 0.0:
            w = 1.0 if e >= 0.0 else 0.0
            dw = 0.0
        else:
            s = min(max((e / kappa + 1.0) / 2.0, 0.0), 1.0)
            w = s * s * (3.0 - 2.0 * s)
            dw = 6.0 * s * (1.0 - s) / (2.0 * kappa)
        pos = w * e / eta_f
        bat = pos + (1.0 - w) * eta_r * e

        de_da = -m_eff * a + 3.0 * c_drag * a * a * dt + c_roll * dt
        de_db = m_eff * b
        dtq_da = k_torque * (de_da / v_op - e * dvop / (v_op * v_op))
        dtq_db = k_torque * (de_db / v_op - e * dvop / (v_op * v_op))
        dom = 0.5 * k_omega

        dpos_de = dw * e / eta_f + w / eta_f
        dpos_deta = -w * e / (eta_f * eta_f)
        dbat_de = dpos_de - dw * eta_r * e + (1.0 - w) * eta_r
        dbat_deta_r = (1.0 - w) * e

        deta_f_da = fw * dom + ft * dtq_da
        deta_f_db = fw * dom + ft * dtq_db
        deta_r_da = rw * dom + rt * dtq_da
        deta_r_db = rw * dom + rt * dtq_db

        out[0, j] = bat
        out[1, j] = pos
        out[2, j] = torque
        out[3, j] = dbat_de * de_da + dpos_deta * deta_f_da + dbat_deta_r * deta_r_da
        out[4, j] = dbat_de * de_db + dpos_deta * deta_f_db + dbat_deta_r * deta_r_db
        out[5, j] = dpos_de * de_da + dpos_deta * deta_f_da
        out[6, j] = dpos_de * de_db + dpos_deta * deta_f_db
        out[7, j] = dtq_da
        out[8, j] = dtq_db
    return out
