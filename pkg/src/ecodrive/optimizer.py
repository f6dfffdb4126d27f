"""Energy-optimal stop-to-stop speed profiles.

The decision variables are the sampled speeds v_1..v_N. The vehicle starts
from rest one step before v_1 and must be back at rest one step after v_N, so
a profile has N + 1 energy steps: the launch step, N - 1 interior steps and
the final stop. Battery energy per step divides wheel energy by the forward
efficiency when driving and scales it by the regenerative efficiency when
braking; efficiency is looked up at the step's mean speed and average torque.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .baseline import horizon
from .efficiency import EfficiencyMap, PowertrainEfficiency
from .kernels import step_kernel
from .transient import TransientPenalty, penalized_samples, smooth_penalty
from .solver import auglag
from .vehicle import V_FLOOR, EnvironmentParams, SpeedProfile, VehicleParams

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
DEFAULT_KAPPA = 1.0  # J, half-width of the drive/regen blend
KAPPA_CONTINUATION = (300.0, 30.0, 10.0, 3.0)  # J, wider blends solved first
SCREEN_STAGES = 2  # continuation stages every start goes through
SCREEN_FTOL = 1e-5
SCREEN_MAX_OUTER = 8


class InfeasibleSpecError(ValueError):
    """The requested average speed cannot be reached within the limits."""


@dataclass(frozen=True)
class SegmentSpec:
    distance: float  # m
    v_avg: float  # m/s, requested
    v_max: float  # m/s
    dt: float = 1.0  # s

    def __post_init__(self):
        if self.distance <= 0 or self.dt <= 0:
            raise ValueError("distance and dt must be positive")
        if not 0 < self.v_avg < self.v_max:
            raise ValueError(f"need 0 < v_avg < v_max, got v_avg={self.v_avg}, v_max={self.v_max}")
        if self.n_samples < 3:
            raise ValueError(f"horizon of {self.n_samples} samples is too short (need >= 3)")

    @property
    def n_samples(self) -> int:
        return horizon(self.distance, self.v_avg, self.dt)

    @property
    def mean_speed(self) -> float:
        """Average speed implied by the rounded horizon; meets the distance exactly."""
        return self.distance / (self.n_samples * self.dt)


@dataclass(frozen=True)
class NlpProblem:
    spec: SegmentSpec
    vehicle: VehicleParams
    efficiency: PowertrainEfficiency
    env: EnvironmentParams = EnvironmentParams()
    penalty: TransientPenalty | None = None
    kappa: float = DEFAULT_KAPPA

    def __post_init__(self):
        if isinstance(self.efficiency, EfficiencyMap):
            object.__setattr__(self, "efficiency", PowertrainEfficiency.single(self.efficiency))
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")


@dataclass
class EnergyBreakdown:
    """Per-step energy accounting of a profile (N + 1 steps, launch first)."""

    dt: float
    speeds: np.ndarray  # step start speeds, speeds[0] == 0
    e_wheel: np.ndarray
    e_bat: np.ndarray
    eta: np.ndarray
    omega: np.ndarray
    torque: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.e_bat))

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.e_bat)

    @property
    def total(self) -> float:
        return float(np.sum(self.e_bat))


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 60
    ftol: float = 1e-8
    n_restarts: int = 3
    seed: int = 0
    perturbation: float = 0.1  # relative amplitude of restart noise
    max_inner: int = 300  # L-BFGS-B iterations per outer step
    n_refine: int = 4  # best-scoring initial guesses that get refined
    n_finalists: int = 2  # refined starts carried to the final blend width


@dataclass
class OptimizationResult:
    profile: SpeedProfile
    breakdown: EnergyBreakdown
    total_battery_energy: float  # J, including the transient surcharge if any
    converged: bool
    iterations: int
    constraint_violation: float
    message: str = ""
    starts: list = field(default_factory=list)


@dataclass
class Residuals:
    """Constraint residuals; positive entries are violations."""

    mean_speed: float
    speed_low: np.ndarray
    speed_high: np.ndarray
    accel_high: np.ndarray
    accel_low: np.ndarray

    def max_violation(self) -> float:
        parts = [abs(self.mean_speed)]
        for arr in (self.speed_low, self.speed_high, self.accel_high, self.accel_low):
            if len(arr):
                parts.append(float(np.max(arr)))
        return max(0.0, *parts)


# --------------------------------------------------------------------------
# energy model


def _blend(e, kappa):
    """C1 weight rising from 0 (regen) to 1 (drive) across |e| < kappa."""
    if kappa == 0:
        return (e >= 0).astype(float), np.zeros_like(e)
    s = np.clip((e / kappa + 1.0) / 2.0, 0.0, 1.0)
    w = s * s * (3.0 - 2.0 * s)
    dw = 6.0 * s * (1.0 - s) / (2.0 * kappa)
    return w, dw


def _step_terms(a, b, problem: NlpProblem):
    """Energy of steps from speed ``a`` to speed ``b`` (arrays of equal shape)."""
    veh, env, dt = problem.vehicle, problem.env, problem.spec.dt
    c_drag = 0.5 * veh.drag_area * env.air_density
    c_roll = veh.mass * env.gravity * env.rolling_coefficient
    e = 0.5 * veh.effective_mass * (b * b - a * a) + c_drag * a ** 3 * dt + c_roll * a * dt
    v_mid = 0.5 * (a + b)
    v_op = np.maximum(v_mid, V_FLOOR)
    torque = veh.wheel_radius / (veh.gear_ratio * dt) * e / v_op
    omega = veh.gear_ratio / veh.wheel_radius * v_mid

    fwd, reg = problem.efficiency.forward, problem.efficiency.regen
    eta_f, fw, ft = fwd.eval_with_grad(omega, torque)
    if reg is fwd:
        eta_r, rw, rt = eta_f, fw, ft
    else:
        eta_r, rw, rt = reg.eval_with_grad(omega, torque)
    w, dw = _blend(e, problem.kappa)
    pos = w * e / eta_f
    e_bat = pos + (1.0 - w) * eta_r * e
    return dict(e=e, v_mid=v_mid, v_op=v_op, omega=omega, torque=torque,
                eta_f=eta_f, eta_r=eta_r, fw=fw, ft=ft, rw=rw, rt=rt,
                w=w, dw=dw, pos=pos, e_bat=e_bat)


def _steps(v, problem: NlpProblem, want_grad: bool):
    """Evaluate every energy step; optionally the partials w.r.t. each step's end speeds."""
    veh, env, dt = problem.vehicle, problem.env, problem.spec.dt
    vv = np.concatenate(([0.0], np.asarray(v, dtype=float), [0.0]))
    a, b = vv[:-1], vv[1:]
    t = _step_terms(a, b, problem)
    out = dict(vv=vv, **t)
    if not want_grad:
        return out

    m_eff = veh.effective_mass
    c_drag = 0.5 * veh.drag_area * env.air_density
    c_roll = veh.mass * env.gravity * env.rolling_coefficient
    k_torque = veh.wheel_radius / (veh.gear_ratio * dt)
    k_omega = veh.gear_ratio / veh.wheel_radius
    e, v_op, w, dw = t["e"], t["v_op"], t["w"], t["dw"]
    eta_f, eta_r = t["eta_f"], t["eta_r"]
    fw, ft, rw, rt = t["fw"], t["ft"], t["rw"], t["rt"]
    de_da = -m_eff * a + 3.0 * c_drag * a * a * dt + c_roll * dt
    de_db = m_eff * b
    dvop = 0.5 * (t["v_mid"] > V_FLOOR)
    dtq_da = k_torque * (de_da / v_op - e * dvop / v_op ** 2)
    dtq_db = k_torque * (de_db / v_op - e * dvop / v_op ** 2)
    dom = 0.5 * k_omega

    deta_f_da = fw * dom + ft * dtq_da
    deta_f_db = fw * dom + ft * dtq_db
    deta_r_da = rw * dom + rt * dtq_da
    deta_r_db = rw * dom + rt * dtq_db

    dpos_de = dw * e / eta_f + w / eta_f
    dpos_deta = -w * e / eta_f ** 2
    dbat_de = dpos_de - dw * eta_r * e + (1.0 - w) * eta_r
    dbat_deta_r = (1.0 - w) * e

    out.update(
        dbat_da=dbat_de * de_da + dpos_deta * deta_f_da + dbat_deta_r * deta_r_da,
        dbat_db=dbat_de * de_db + dpos_deta * deta_f_db + dbat_deta_r * deta_r_db,
        dpos_da=dpos_de * de_da + dpos_deta * deta_f_da,
        dpos_db=dpos_de * de_db + dpos_deta * deta_f_db,
        dtq_da=dtq_da,
        dtq_db=dtq_db,
    )
    return out


def _to_speed_grad(d_da, d_db):
    # step j starts at vv[j] and ends at vv[j+1]; v_i is vv[i+1]
    return d_da[1:] + d_db[:-1]


def _compiled_steps(v, problem: NlpProblem):
    veh, env, dt = problem.vehicle, problem.env, problem.spec.dt
    vv = np.concatenate(([0.0], np.asarray(v, dtype=float), [0.0]))
    return step_kernel(vv, dt, veh.effective_mass,
                       0.5 * veh.drag_area * env.air_density,
                       veh.mass * env.gravity * env.rolling_coefficient,
                       veh.wheel_radius / (veh.gear_ratio * dt),
                       veh.gear_ratio / veh.wheel_radius, V_FLOOR, float(problem.kappa),
                       *problem.efficiency.forward.kernel_arrays,
                       *problem.efficiency.regen.kernel_arrays)


def objective_and_grad(v, problem: NlpProblem, compiled: bool = True):
    """Objective and its gradient w.r.t. the speeds.

    ``compiled=False`` uses the plain numpy step model instead of the fused
    kernel; both give the same numbers.
    """
    if compiled:
        bat, pos, torque, dbat_da, dbat_db, dpos_da, dpos_db, dtq_da, dtq_db = \
            _compiled_steps(v, problem)
    else:
        s = _steps(v, problem, want_grad=True)
        bat, pos, torque = s["e_bat"], s["pos"], s["torque"]
        dbat_da, dbat_db, dpos_da, dpos_db = s["dbat_da"], s["dbat_db"], s["dpos_da"], s["dpos_db"]
        dtq_da, dtq_db = s["dtq_da"], s["dtq_db"]
    value = float(np.sum(bat))
    grad = _to_speed_grad(dbat_da, dbat_db)
    pen = problem.penalty
    if pen is not None and pen.penalty_fraction > 0:
        extra, d_pos, d_tq = smooth_penalty(pos, torque, problem.spec.dt, pen)
        value += extra
        grad = grad + _to_speed_grad(d_pos * dpos_da + d_tq * dtq_da,
                                     d_pos * dpos_db + d_tq * dtq_db)
    return value, grad


def objective(v, problem: NlpProblem) -> float:
    """Total battery energy (J) of speed vector ``v``, smoothed surcharge included."""
    return objective_and_grad(v, problem)[0]


def evaluate_profile(profile: SpeedProfile, problem: NlpProblem) -> EnergyBreakdown:
    """Per-step energy breakdown under the problem's model (no surcharge)."""
    if len(profile) != problem.spec.n_samples:
        raise ValueError(f"profile has {len(profile)} samples, problem horizon is "
                         f"{problem.spec.n_samples}")
    if abs(profile.dt - problem.spec.dt) > 1e-12:
        raise ValueError("profile dt does not match the problem dt")
    return _breakdown(profile.speeds, problem)


def _breakdown(v, problem: NlpProblem) -> EnergyBreakdown:
    s = _steps(v, problem, want_grad=False)
    eta = np.where(s["e"] >= 0, s["eta_f"], s["eta_r"])
    return EnergyBreakdown(dt=problem.spec.dt, speeds=s["vv"][:-1], e_wheel=s["e"],
                           e_bat=s["e_bat"], eta=eta, omega=s["omega"], torque=s["torque"])


def profile_energy(profile: SpeedProfile, problem: NlpProblem) -> float:
    """Battery energy (J) with the exact transient surcharge if one is configured."""
    bd = evaluate_profile(profile, problem)
    if problem.penalty is None:
        return bd.total
    return float(np.sum(penalized_samples(bd.e_bat, bd.torque, bd.dt, problem.penalty)))


# --------------------------------------------------------------------------
# constraints


def _accel(v, dt):
    vv = np.concatenate(([0.0], np.asarray(v, dtype=float), [0.0]))
    return np.diff(vv) / dt


def constraints(v, spec: SegmentSpec, vehicle: VehicleParams) -> Residuals:
    """Residuals of the mean-speed, speed-bound and acceleration constraints.

    Acceleration is checked over every step including the launch from rest and
    the final stop.
    """
    v = np.asarray(v, dtype=float)
    acc = _accel(v, spec.dt)
    return Residuals(
        mean_speed=float(np.mean(v) - spec.mean_speed),
        speed_low=-v,
        speed_high=v - spec.v_max,
        accel_high=acc - vehicle.max_acceleration,
        accel_low=-vehicle.max_deceleration - acc,
    )


def linear_constraint_matrices(spec: SegmentSpec, vehicle: VehicleParams):
    """``(A_eq, b_eq, A_in, b_in)`` with ``A_eq v = b_eq`` and ``A_in v <= b_in``."""
    n, dt = spec.n_samples, spec.dt
    # diff @ v gives the N + 1 step accelerations, launch and final stop included
    diff = (np.eye(n + 1, n) - np.eye(n + 1, n, k=-1)) / dt
    a_in = np.vstack([diff, -diff])
    b_in = np.concatenate([np.full(n + 1, vehicle.max_acceleration),
                           np.full(n + 1, vehicle.max_deceleration)])
    a_eq = np.full((1, n), 1.0 / n)
    b_eq = np.array([spec.mean_speed])
    return a_eq, b_eq, a_in, b_in


# --------------------------------------------------------------------------
# initial guesses


def _trapezoid(n, dt, v_cruise, accel, decel):
    k = np.arange(1, n + 1) * dt
    return np.minimum.reduce([np.full(n, v_cruise), accel * k, decel * (n + 1) * dt - decel * k])


def trapezoid_profile(spec: SegmentSpec, vehicle: VehicleParams, fraction: float = 0.5) -> np.ndarray:
    """Accelerate, cruise, decelerate at ``fraction`` of the limits, meeting the mean speed.

    Falls back to the full limits when the reduced ones cannot reach the mean
    speed; raises :class:`InfeasibleSpecError` when neither can.
    """
    n, dt, target = spec.n_samples, spec.dt, spec.mean_speed
    for frac in (fraction, 1.0):
        acc, dec = frac * vehicle.max_acceleration, frac * vehicle.max_deceleration
        if np.mean(_trapezoid(n, dt, spec.v_max, acc, dec)) < target:
            continue
        lo, hi = 0.0, spec.v_max
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.mean(_trapezoid(n, dt, mid, acc, dec)) < target:
                lo = mid
            else:
                hi = mid
        v = _trapezoid(n, dt, hi, acc, dec)
        return v * (target / np.mean(v))
    raise InfeasibleSpecError(
        f"average speed {target:.3f} m/s over {n} steps is unreachable with "
        f"a_max={vehicle.max_acceleration}, d={vehicle.max_deceleration}, v_max={spec.v_max}")


def _perturbed(v0, spec: SegmentSpec, rng, amplitude):
    n = len(v0)
    noise = rng.standard_normal(n)
    kernel = np.hanning(max(3, n // 6))
    noise = np.convolve(noise, kernel / kernel.sum(), mode="same")
    noise /= max(np.max(np.abs(noise)), 1e-12)
    v = np.clip(v0 * (1.0 + amplitude * noise), 0.0, spec.v_max)
    return v * (spec.mean_speed / np.mean(v))


def coast_speed(v, problem: NlpProblem):
    """Speed after one step of free rolling (zero wheel energy) from ``v``."""
    veh, env, dt = problem.vehicle, problem.env, problem.spec.dt
    c_drag = 0.5 * veh.drag_area * env.air_density
    c_roll = veh.mass * env.gravity * env.rolling_coefficient
    v = np.asarray(v, dtype=float)
    sq = v * v - 2.0 * dt * (c_drag * v ** 3 + c_roll * v) / veh.effective_mass
    return np.sqrt(np.maximum(sq, 0.0))


def _pulse_glide(problem: NlpProblem, v_high, low_ratio, accel):
    spec, veh = problem.spec, problem.vehicle
    n, dt = spec.n_samples, spec.dt
    v_low = low_ratio * v_high
    v = np.empty(n)
    speed, pulsing = 0.0, True
    for k in range(n):
        if pulsing:
            speed = min(speed + accel * dt, v_high)
            pulsing = speed < v_high
        else:
            speed = float(coast_speed(speed, problem))
            if speed <= v_low:
                pulsing = True
        # stay inside the envelope that still allows stopping at step n + 1
        speed = min(speed, veh.max_deceleration * dt * (n - k), spec.v_max)
        v[k] = speed
    return v


def pulse_glide_profile(problem: NlpProblem, low_ratio: float, accel_fraction: float):
    """Accelerate to a peak, coast down to ``low_ratio`` of it, repeat.

    The peak is bisected so the profile meets the mean speed; returns ``None``
    when it cannot.
    """
    spec = problem.spec
    accel = accel_fraction * problem.vehicle.max_acceleration
    target = spec.mean_speed
    if np.mean(_pulse_glide(problem, spec.v_max, low_ratio, accel)) < target:
        return None
    lo, hi = target, spec.v_max
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.mean(_pulse_glide(problem, mid, low_ratio, accel)) < target:
            lo = mid
        else:
            hi = mid
    v = _pulse_glide(problem, hi, low_ratio, accel)
    return v * (target / np.mean(v))


PULSE_GLIDE_FAMILY = tuple((r, f) for r in (0.95, 0.85, 0.7, 0.5) for f in (1.0, 0.5))


def pulse_glide_seeds(problem: NlpProblem):
    seeds = []
    for ratio, frac in PULSE_GLIDE_FAMILY:
        v = pulse_glide_profile(problem, ratio, frac)
        if v is not None:
            seeds.append(v)
    return seeds


def _dp_pass(cost, launch, stop, reward, n):
    value = launch - reward
    back = np.empty((n - 1, len(value)), dtype=np.int64)
    for k in range(n - 1):
        total = value[:, None] + cost
        back[k] = np.argmin(total, axis=0)
        value = total[back[k], np.arange(len(value))] - reward
    value = value + stop
    idx = np.empty(n, dtype=np.int64)
    idx[-1] = int(np.argmin(value))
    for k in range(n - 2, -1, -1):
        idx[k] = back[k, idx[k + 1]]
    return idx


def dp_seed(problem: NlpProblem, resolution: float = 0.1):
    """Speed-grid dynamic programme with a Lagrangian reward on distance.

    The multiplier on speed is bisected until the path covers the target
    distance. Returns ``None`` when no multiplier produces a usable path.
    """
    spec, veh = problem.spec, problem.vehicle
    n, dt, target = spec.n_samples, spec.dt, spec.mean_speed
    grid = np.arange(0.0, spec.v_max + 1e-9, resolution)
    a, b = np.meshgrid(grid, grid, indexing="ij")
    unsmoothed = NlpProblem(spec, veh, problem.efficiency, problem.env, None, problem.kappa)
    cost = _step_terms(a, b, unsmoothed)["e_bat"]
    accel = (b - a) / dt
    cost = np.where((accel > veh.max_acceleration + 1e-9)
                    | (accel < -veh.max_deceleration - 1e-9), np.inf, cost)
    zeros = np.zeros_like(grid)
    launch = _step_terms(zeros, grid, unsmoothed)["e_bat"]
    launch = np.where(grid > veh.max_acceleration * dt + 1e-9, np.inf, launch)
    stop = _step_terms(grid, zeros, unsmoothed)["e_bat"]
    stop = np.where(grid > veh.max_deceleration * dt + 1e-9, np.inf, stop)

    def path(reward):
        return grid[_dp_pass(cost, launch, stop, reward * grid, n)]

    lo, hi = 0.0, veh.mass * 10.0
    for _ in range(30):
        if np.mean(path(hi)) >= target:
            break
        lo, hi = hi, 2.0 * hi
    else:
        return None
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if np.mean(path(mid)) < target:
            lo = mid
        else:
            hi = mid
    v = path(hi)
    if np.mean(v) <= 0:
        return None
    return v * (target / np.mean(v))


def initial_guesses(problem: NlpProblem):
    """Named feasible starting profiles: trapezoid, pulse-and-glide family, DP."""
    spec, veh = problem.spec, problem.vehicle
    guesses = [("trapezoid", trapezoid_profile(spec, veh))]
    for (ratio, frac), v in zip(PULSE_GLIDE_FAMILY,
                                (pulse_glide_profile(problem, r, f) for r, f in PULSE_GLIDE_FAMILY)):
        if v is not None:
            guesses.append((f"pulse_glide_{ratio:g}_{frac:g}", v))
    v = dp_seed(problem)
    if v is not None:
        guesses.append(("dp", v))
    return guesses


# --------------------------------------------------------------------------
# solver


def _kappa_stages(kappa: float):
    return [k for k in KAPPA_CONTINUATION if k > kappa] + [kappa]


def _run_stages(problem, x, stages, scale, bounds, mats, options, warm=None, screening=False):
    """Augmented-Lagrangian solves over a sequence of blend widths, warm-started.

    Screening solves stop early; they only need to rank the starts.
    """
    a_eq, b_eq, a_in, b_in = mats
    outer = inner = 0
    res = warm
    for k in stages:
        stage = replace(problem, kappa=k)

        def fun(z, stage=stage):
            f, g = objective_and_grad(z, stage)
            return f / scale, g / scale

        if screening:
            ftol, max_outer = SCREEN_FTOL, SCREEN_MAX_OUTER
        elif k == problem.kappa:
            ftol, max_outer = options.ftol, options.max_iter
        else:
            ftol, max_outer = options.ftol, 20
        res = auglag(fun, x, bounds, a_eq, b_eq, a_in, b_in,
                     feas_tol=0.1 * FEAS_TOL, ftol=ftol, max_outer=max_outer,
                     max_inner=options.max_inner, inner_gtol=1e-6, warm=res)
        x = res.x
        outer += res.outer_iterations
        inner += res.inner_iterations
    return x, res, outer, inner


def solve(problem: NlpProblem, options: SolverOptions = SolverOptions()) -> OptimizationResult:
    """Minimise battery energy over the sampled speeds.

    Every initial guess is scored and the ``options.n_refine`` best, plus
    ``options.n_restarts`` seeded perturbations of the best, are refined with
    a wide drive/regen blend. The ``options.n_finalists`` lowest of those are
    carried down to the configured blend width and the feasible local minimum
    with the lowest energy is kept.
    """
    spec, vehicle = problem.spec, problem.vehicle
    guesses = initial_guesses(problem)  # raises InfeasibleSpecError first
    guesses.sort(key=lambda g: objective(g[1], problem))
    rng = np.random.default_rng(options.seed)
    starts = guesses[:options.n_refine]
    starts += [(f"perturbed_{i}", _perturbed(guesses[0][1], spec, rng, options.perturbation))
               for i in range(options.n_restarts)]

    scale = vehicle.mass * spec.mean_speed ** 2
    mats = linear_constraint_matrices(spec, vehicle)
    bounds = [(0.0, spec.v_max)] * spec.n_samples
    stages = _kappa_stages(problem.kappa)
    n_screen = min(SCREEN_STAGES, len(stages) - 1)

    screened = []
    for name, x0 in starts:
        x, res, outer, inner = _run_stages(problem, x0, stages[:n_screen], scale, bounds,
                                           mats, options, screening=True)
        screened.append((objective(x, problem), name, x, res, outer, inner))
    screened.sort(key=lambda item: item[0])

    best = None
    records = []
    for rank, (screen_energy, name, x, res, outer, inner) in enumerate(screened):
        if rank < options.n_finalists:
            x, res, more_outer, more_inner = _run_stages(
                problem, x, stages[n_screen:], scale, bounds, mats, options, warm=res)
            outer += more_outer
            inner += more_inner
        viol = constraints(x, spec, vehicle).max_violation()
        energy = objective(x, problem)
        finalist = rank < options.n_finalists
        records.append({"start": name, "energy": energy, "violation": viol,
                        "outer": outer, "inner": inner, "finalist": finalist,
                        "success": bool(res.success) and finalist})
        log.debug("start %s: E=%.3f J viol=%.2e outer=%d inner=%d", name, energy, viol,
                  outer, inner)
        if not finalist:
            continue
        key = (viol > FEAS_TOL, energy)
        if best is None or key < best[0]:
            best = (key, x, res, viol, outer)

    _, x, res, viol, outer = best
    profile = SpeedProfile(spec.dt, x)
    breakdown = _breakdown(x, problem)
    return OptimizationResult(
        profile=profile,
        breakdown=breakdown,
        total_battery_energy=profile_energy(profile, problem),
        converged=bool(res.success) and viol <= FEAS_TOL,
        iterations=outer,
        constraint_violation=viol,
        message=res.message,
        starts=records,
    )
