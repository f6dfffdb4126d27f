"""Augmented-Lagrangian solver for smooth objectives with linear constraints.

Solves

    min f(x)  s.t.  A_eq x = b_eq,  A_in x <= b_in,  lo <= x <= hi

with the Powell-Hestenes-Rockafellar augmented Lagrangian. Bounds stay
explicit in the inner L-BFGS-B solves; linear rows are handled by
multipliers and a quadratic penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import minimize


@dataclass
class AugLagResult:
    x: np.ndarray
    fun: float
    violation: float
    outer_iterations: int
    inner_iterations: int
    success: bool
    message: str
    eq_multipliers: np.ndarray | None = None
    ineq_multipliers: np.ndarray | None = None
    rho: float = 10.0


def _violation(x, a_eq, b_eq, a_in, b_in):
    worst = 0.0
    if a_eq is not None and len(b_eq):
        worst = max(worst, float(np.max(np.abs(a_eq @ x - b_eq))))
    if a_in is not None and len(b_in):
        worst = max(worst, float(np.max(a_in @ x - b_in)))
    return max(worst, 0.0)


def auglag(fun_and_grad, x0, bounds, a_eq=None, b_eq=None, a_in=None, b_in=None, *,
           feas_tol=1e-9, ftol=1e-8, max_outer=60, max_inner=400,
           rho0=10.0, rho_max=1e6, rho_growth=10.0, inner_gtol=1e-8,
           warm: AugLagResult | None = None) -> AugLagResult:
    """Minimise ``fun_and_grad`` (returning value and gradient) under linear constraints.

    Stops once the constraint violation is below ``feas_tol`` and the
    objective changed by less than ``ftol`` (relative) over an outer step.
    Passing a previous result as ``warm`` reuses its multipliers and penalty.
    """
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    b_in = np.zeros(0) if b_in is None else np.asarray(b_in, dtype=float)
    # constraint rows are typically banded; sparse products keep iterations cheap
    a_eq = sparse.csr_matrix(a_eq) if len(b_eq) else None
    a_in = sparse.csr_matrix(a_in) if len(b_in) else None
    a_eq_t = a_eq.T.tocsr() if a_eq is not None else None
    a_in_t = a_in.T.tocsr() if a_in is not None else None
    lam = np.zeros(len(b_eq))
    mu = np.zeros(len(b_in))
    rho = rho0
    if warm is not None and warm.eq_multipliers is not None:
        lam, mu, rho = warm.eq_multipliers.copy(), warm.ineq_multipliers.copy(), warm.rho

    def lagrangian(z):
        f, g = fun_and_grad(z)
        grad = np.array(g, dtype=float)
        if len(b_eq):
            c = a_eq @ z - b_eq
            f += lam @ c + 0.5 * rho * c @ c
            grad += a_eq_t @ (lam + rho * c)
        if len(b_in):
            shifted = np.maximum(0.0, mu + rho * (a_in @ z - b_in))
            f += (shifted @ shifted - mu @ mu) / (2.0 * rho)
            grad += a_in_t @ shifted
        return f, grad

    prev_f = None
    prev_viol = np.inf
    inner_total = 0
    message = "outer iteration limit reached"
    success = False
    outer = 0
    for outer in range(1, max_outer + 1):
        res = minimize(lagrangian, x, jac=True, method="L-BFGS-B",
                       bounds=list(zip(lo, hi)),
                       options={"maxiter": max_inner, "ftol": 1e-15, "gtol": inner_gtol})
        x = np.clip(res.x, lo, hi)
        inner_total += int(res.nit)
        f = float(fun_and_grad(x)[0])
        viol = _violation(x, a_eq, b_eq, a_in, b_in)

        if len(b_eq):
            lam = lam + rho * (a_eq @ x - b_eq)
        if len(b_in):
            mu = np.maximum(0.0, mu + rho * (a_in @ x - b_in))

        if prev_f is not None and viol <= feas_tol:
            if abs(f - prev_f) <= ftol * max(1.0, abs(f)):
                success = True
                message = "converged"
                break
        if viol > feas_tol and viol > 0.25 * prev_viol and rho < rho_max:
            rho = min(rho * rho_growth, rho_max)
        prev_viol = viol
        prev_f = f

    return AugLagResult(x=x, fun=float(fun_and_grad(x)[0]),
                        violation=_violation(x, a_eq, b_eq, a_in, b_in),
                        outer_iterations=outer, inner_iterations=inner_total,
                        success=success, message=message,
                        eq_multipliers=lam, ineq_multipliers=mu, rho=rho)
