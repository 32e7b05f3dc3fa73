"""Time integration of the mean-field equations under control schedules.

The equations are stiff (rate ratios up to ~1e5 between the cavity/atom
scales and the slow Gamma/lam pumping), so integration uses scipy's implicit
Radau method with the analytic Jacobian.  With loss disabled the reduced
6-component system is integrated, which conserves total population exactly
by construction; with loss enabled the full 7-component system is used.

Schedules are piecewise smooth; integration is restarted at every schedule
breakpoint so discontinuities never sit inside an adaptive step.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import InsufficientPopulationError, StiffnessError
from .model import (Controls, LossOptions, MeanFieldState, ModelParams,
                    NO_LOSS, ground_state, jacobian_full, _jac_reduced_vec,
                    rhs_full, rhs_reduced, transmittance)

__all__ = [
    "ScheduleKind",
    "ControlTarget",
    "Schedule",
    "IntegratorOptions",
    "Trajectory",
    "TransitionEvent",
    "HysteresisRecord",
    "schedule_eval",
    "integrate",
    "detect_transitions",
    "hysteresis_run",
    "estimate_lambda",
]

DEFAULT_SEED_ALPHA = 1e-8


class ScheduleKind(enum.Enum):
    CONSTANT = "constant"
    LINEAR_RAMP_CYCLE = "ramp"
    SQUARE_WAVE = "square"
    PIECEWISE_LINEAR = "piecewise"


class ControlTarget(enum.Enum):
    ETA = "eta"
    LAMBDA = "lambda"


@dataclass(frozen=True)
class Schedule:
    """Time-dependent control value.

    parameters by kind:
      CONSTANT:          (value,)
      LINEAR_RAMP_CYCLE: (low, high, t_up, t_down, n_cycles); repeats up/down
                         n_cycles times, then holds the final value
      SQUARE_WAVE:       (low, high, period, duty); starts high at t = 0
      PIECEWISE_LINEAR:  knots [(t, value), ...], strictly increasing t
    """

    kind: ScheduleKind
    target: ControlTarget
    parameters: tuple = ()
    knots: tuple = ()

    def __post_init__(self):
        if self.kind is ScheduleKind.PIECEWISE_LINEAR:
            ts = [t for t, _ in self.knots]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("piecewise knots must be strictly increasing")
            if any(v < 0 for _, v in self.knots):
                raise ValueError("schedule values must be non-negative")
        else:
            if any(v < 0 for v in self.parameters):
                raise ValueError("schedule parameters must be non-negative")

    @staticmethod
    def constant(target, value):
        return Schedule(ScheduleKind.CONSTANT, target, (float(value),))

    @staticmethod
    def ramp_cycle(target, low, high, t_up, t_down, n_cycles):
        return Schedule(ScheduleKind.LINEAR_RAMP_CYCLE, target,
                        (float(low), float(high), float(t_up), float(t_down),
                         int(n_cycles)))

    @staticmethod
    def square_wave(target, low, high, period, duty=0.5):
        return Schedule(ScheduleKind.SQUARE_WAVE, target,
                        (float(low), float(high), float(period), float(duty)))

    @staticmethod
    def piecewise(target, knots):
        return Schedule(ScheduleKind.PIECEWISE_LINEAR, target,
                        knots=tuple((float(t), float(v)) for t, v in knots))

    def __call__(self, t):
        return schedule_eval(self, t)

    def breakpoints(self, t_end):
        """Times in (0, t_end) where the schedule is non-smooth."""
        pts = []
        if self.kind is ScheduleKind.LINEAR_RAMP_CYCLE:
            low, high, t_up, t_down, n = self.parameters
            period = t_up + t_down
            for k in range(int(n)):
                pts += [k * period + t_up, (k + 1) * period]
        elif self.kind is ScheduleKind.SQUARE_WAVE:
            low, high, period, duty = self.parameters
            n = int(math.ceil(t_end / period)) + 1
            for k in range(n):
                pts += [k * period + duty * period, (k + 1) * period]
        elif self.kind is ScheduleKind.PIECEWISE_LINEAR:
            pts = [t for t, _ in self.knots]
        return [t for t in pts if 0.0 < t < t_end]


def schedule_eval(schedule: Schedule, t: float) -> float:
    """Exact schedule value at time t >= 0."""
    kind, par = schedule.kind, schedule.parameters
    if kind is ScheduleKind.CONSTANT:
        return par[0]
    if kind is ScheduleKind.LINEAR_RAMP_CYCLE:
        low, high, t_up, t_down, n = par
        period = t_up + t_down
        if t >= n * period:
            return low
        tau = t % period
        if tau <= t_up:
            return low + (high - low) * tau / t_up
        return high - (high - low) * (tau - t_up) / t_down
    if kind is ScheduleKind.SQUARE_WAVE:
        low, high, period, duty = par
        tau = t % period
        return high if tau < duty * period else low
    # piecewise linear: clamp outside the knot range
    ts = [p[0] for p in schedule.knots]
    vs = [p[1] for p in schedule.knots]
    if t <= ts[0]:
        return vs[0]
    if t >= ts[-1]:
        return vs[-1]
    i = bisect.bisect_right(ts, t) - 1
    w = (t - ts[i]) / (ts[i + 1] - ts[i])
    return vs[i] + w * (vs[i + 1] - vs[i])


@dataclass(frozen=True)
class IntegratorOptions:
    rtol: float = 1e-8
    atol: float = 1e-10          # scaled per component group below
    max_step: float = math.inf
    n_samples: int = 2000
    log_spaced: bool = False     # capture runaways with log-spaced samples
    method: str = "Radau"


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray               # (n, 7) real vectors
    controls_trace: np.ndarray       # (n, 2) = (eta, lam)
    transmittance_trace: np.ndarray
    params: ModelParams = None
    meta: dict = field(default_factory=dict)

    def state_at(self, i) -> MeanFieldState:
        return MeanFieldState.from_vector(self.states[i])

    @property
    def n_f(self):
        return self.states[:, 6]

    @property
    def total_population(self):
        return self.states[:, 4:7].sum(axis=1)


def _sample_times(t_end, opts: IntegratorOptions):
    n = max(2, opts.n_samples)
    if opts.log_spaced:
        ts = np.concatenate([[0.0], np.geomspace(t_end * 1e-6, t_end, n - 1)])
    else:
        ts = np.linspace(0.0, t_end, n)
    return ts


def integrate(initial: MeanFieldState, params: ModelParams,
              eta_schedule: Schedule, lambda_schedule: Schedule,
              loss: LossOptions = NO_LOSS, t_end: float = 1.0,
              opts: IntegratorOptions = IntegratorOptions()) -> Trajectory:
    """Integrate the mean-field equations under time-dependent controls."""
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    p = params
    n_total = initial.total_population
    reduced = not loss.enabled

    field_scale = max(1.0, eta_schedule(0.0) / p.kappa)
    pop_scale = max(1.0, n_total)
    if reduced:
        atol = opts.atol * np.array([field_scale] * 2
                                    + [pop_scale * p.g] * 2 + [pop_scale] * 2)
        y0 = initial.to_vector()[:6]
    else:
        atol = opts.atol * np.array([field_scale] * 2
                                    + [pop_scale * p.g] * 2 + [pop_scale] * 3)
        y0 = initial.to_vector()

    seg_edges = sorted(set(eta_schedule.breakpoints(t_end))
                       | set(lambda_schedule.breakpoints(t_end)))
    seg_edges = [0.0] + seg_edges + [t_end]
    sample_ts = _sample_times(t_end, opts)

    times, ys = [], []
    y = y0.copy()
    for t0, t1 in zip(seg_edges, seg_edges[1:]):
        if t1 - t0 <= 1e-14 * max(1.0, t_end):
            continue
        # clamp schedule lookups just inside the segment so the implicit
        # stages at the right edge never see the post-jump control value
        t_hi = np.nextafter(t1, t0)

        def fun(t, y, t_hi=t_hi):
            tc = min(max(t, t0), t_hi)
            eta, lam = eta_schedule(tc), lambda_schedule(tc)
            if reduced:
                return rhs_reduced(y, p, eta, lam, n_total)
            return rhs_full(y, p, eta, lam, loss)

        def jac(t, y, t_hi=t_hi):
            lam = lambda_schedule(min(max(t, t0), t_hi))
            if reduced:
                return _jac_reduced_vec(y, p, lam)
            return jacobian_full(y, p, lam, loss)

        mask = (sample_ts >= t0) & (sample_ts < t1) if t1 < t_end else \
               (sample_ts >= t0) & (sample_ts <= t1)
        t_eval = np.unique(np.concatenate([sample_ts[mask], [t1]]))
        sol = solve_ivp(fun, (t0, t1), y, method=opts.method,
                        t_eval=t_eval, jac=jac,
                        rtol=opts.rtol, atol=atol, max_step=opts.max_step)
        if not sol.success:
            raise StiffnessError(
                f"integrator failed in [{t0:g}, {t1:g}]: {sol.message}",
                last_time=sol.t[-1] if sol.t.size else t0,
                last_state=sol.y[:, -1] if sol.t.size else y)
        keep = sol.t < t1 if t1 < t_end else np.ones_like(sol.t, dtype=bool)
        times.append(sol.t[keep])
        ys.append(sol.y[:, keep].T)
        y = sol.y[:, -1]

    t_arr = np.concatenate(times)
    y_arr = np.vstack(ys)
    if reduced:
        nf = n_total - y_arr[:, 4] - y_arr[:, 5]
        y_arr = np.hstack([y_arr, nf[:, None]])

    pops = y_arr[:, 4:7]
    if pops.min() < -1e-9 * max(n_total, 1.0):
        i = int(np.unravel_index(np.argmin(pops), pops.shape)[0])
        raise StiffnessError(
            f"population invariant violated at t={t_arr[i]:g}: "
            f"state={y_arr[i].tolist()}",
            last_time=float(t_arr[i]), last_state=y_arr[i])

    ctrl = np.array([[eta_schedule(t), lambda_schedule(t)] for t in t_arr])
    inten = y_arr[:, 0] ** 2 + y_arr[:, 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        trans = np.where(ctrl[:, 0] > 0,
                         inten * (p.kappa**2 + p.delta_C**2)
                         / np.where(ctrl[:, 0] > 0, ctrl[:, 0], 1.0) ** 2,
                         0.0)
    return Trajectory(times=t_arr, states=y_arr, controls_trace=ctrl,
                      transmittance_trace=trans, params=p,
                      meta={"t_end": t_end, "loss": loss,
                            "rtol": opts.rtol, "atol": opts.atol,
                            "n_total0": n_total})


@dataclass(frozen=True)
class TransitionEvent:
    time: float
    direction: str  # "up" or "down"


def detect_transitions(traj: Trajectory, low: float = 0.1,
                       high: float = 0.5):
    """Two-threshold (Schmitt) event detection on the transmittance trace."""
    if not (0.0 <= low < high <= 1.0):
        raise ValueError("need 0 <= low < high <= 1")
    T = traj.transmittance_trace
    t = traj.times
    events = []
    if T[0] >= high:
        region = "high"
    elif T[0] <= low:
        region = "low"
    else:
        region = None
    for i in range(1, len(T)):
        if region != "high" and T[i] >= high:
            if region == "low":
                tc = _cross_time(t[i - 1], t[i], T[i - 1], T[i], high)
                events.append(TransitionEvent(tc, "up"))
            region = "high"
        elif region != "low" and T[i] <= low:
            if region == "high":
                tc = _cross_time(t[i - 1], t[i], T[i - 1], T[i], low)
                events.append(TransitionEvent(tc, "down"))
            region = "low"
    return events


def _cross_time(t0, t1, v0, v1, level):
    if v1 == v0:
        return t1
    w = (level - v0) / (v1 - v0)
    return t0 + w * (t1 - t0)


@dataclass
class HysteresisRecord:
    control_grid: np.ndarray
    up_curves: list          # per cycle: transmittance on control_grid
    down_curves: list
    loop_areas: list         # unsigned enclosed area per cycle
    trajectory: Trajectory


def hysteresis_run(params: ModelParams, ramp: Schedule,
                   fixed_other: Controls, loss: LossOptions = NO_LOSS,
                   opts: IntegratorOptions = None,
                   n_grid: int = 200) -> HysteresisRecord:
    """Ramp one control cyclically from the all-atoms-in-g start and measure
    the transmittance loop per cycle."""
    if ramp.kind is not ScheduleKind.LINEAR_RAMP_CYCLE:
        raise ValueError("hysteresis_run requires a LINEAR_RAMP_CYCLE schedule")
    low, high, t_up, t_down, n_cycles = ramp.parameters
    period = t_up + t_down
    t_end = n_cycles * period

    if ramp.target is ControlTarget.ETA:
        eta_s = ramp
        lam_s = Schedule.constant(ControlTarget.LAMBDA, fixed_other.lam)
    else:
        eta_s = Schedule.constant(ControlTarget.ETA, fixed_other.eta)
        lam_s = ramp

    if opts is None:
        opts = IntegratorOptions(n_samples=max(2000, 600 * int(n_cycles)))
    initial = ground_state(params, seed_alpha=DEFAULT_SEED_ALPHA)
    traj = integrate(initial, params, eta_s, lam_s, loss, t_end, opts)

    ctrl_idx = 0 if ramp.target is ControlTarget.ETA else 1
    grid = np.linspace(low, high, n_grid)
    up_curves, down_curves, areas = [], [], []
    for k in range(int(n_cycles)):
        m_up = (traj.times >= k * period) & (traj.times <= k * period + t_up)
        m_dn = (traj.times >= k * period + t_up) & \
               (traj.times <= (k + 1) * period)
        c_up = traj.controls_trace[m_up, ctrl_idx]
        c_dn = traj.controls_trace[m_dn, ctrl_idx]
        T_up = np.interp(grid, c_up, traj.transmittance_trace[m_up])
        T_dn = np.interp(grid, c_dn[::-1],
                         traj.transmittance_trace[m_dn][::-1])
        up_curves.append(T_up)
        down_curves.append(T_dn)
        areas.append(abs(float(np.trapezoid(T_dn - T_up, grid))))
    return HysteresisRecord(grid, up_curves, down_curves, areas, traj)


def estimate_lambda(traj: Trajectory, window, params: ModelParams) -> float:
    """Repump-rate estimate from the initial decay slope of the shelved
    population after switch-on: lam ~ -d(N_f)/dt / N_f(t0)."""
    t0, t1 = window
    mask = (traj.times >= t0) & (traj.times <= t1)
    if mask.sum() < 2:
        raise ValueError("window contains fewer than two samples")
    ts = traj.times[mask]
    nf = traj.n_f[mask]
    n_total = max(traj.meta.get("n_total0", params.n_atoms), 1e-300)
    if nf[0] < 1e-6 * n_total:
        raise InsufficientPopulationError(
            f"N_f(t0) = {nf[0]:g} too small relative to N = {n_total:g}")
    slope = np.polyfit(ts, nf, 1)[0]
    return float(-slope / nf[0])
