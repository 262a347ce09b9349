"""Nonnegative tracking of a moving target trajectory.

Run the target's own control until the deviation has decayed, then hand the
last ``tau`` time units to the local controller. The gradient condition
``M_a * ||ybar_x||_inf <= a0 / (2 C)`` (C = L/pi the Poincare constant)
guarantees the L2 decay in the first phase.
"""
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (HypothesisViolation, IllConditioningError, InvalidParameterError, LocalControlFailure,
                     SolverDivergenceError, TrackingFailure)
from .fields import ControlSchedule, Trajectory, concatenate
from .grid import gradient, l2_norm, sup_norm
from .local import HUM_EPS, TERMINAL_TOL, exact_control_to_trajectory
from .solvers import solve_forward
from .staircase import GlobalControlResult

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.5
DEFAULT_T_CAP = 16.0


@dataclass
class TargetTrajectory:
    """A target produced by running the forward solver on ``(ybar0, vbar)``."""

    law: object
    grid: object
    mask: object
    ybar0: np.ndarray
    vbar_fn: Callable
    trajectory: Trajectory
    control: ControlSchedule

    @property
    def eta(self):
        return self.control.min_value

    @property
    def eta_omega(self):
        return float(self.control.values[:, self.mask.support].min())

    @property
    def grad_sup(self):
        return max(sup_norm(gradient(row, self.grid)) for row in self.trajectory.values)

    @property
    def dt(self):
        return self.trajectory.dt

    @property
    def horizon(self):
        return float(self.trajectory.times[-1])

    def resample(self, dt, T):
        return manufacture_target(self.law, self.grid, self.mask, self.ybar0, self.vbar_fn, dt, T)

    def window(self, i0, i1):
        return self.trajectory.window(i0, i1), self.control.window(i0, i1)


def _as_callable(vbar, n):
    if callable(vbar):
        return vbar
    field_ = np.broadcast_to(np.asarray(vbar, dtype=float), (n,)).copy()
    return lambda t: field_


def manufacture_target(law, grid, mask, ybar0, vbar, dt, T):
    """Target trajectory from an initial state and a control (field or callable of t)."""
    fn = _as_callable(vbar, grid.n)
    traj = solve_forward(law, grid, ybar0, fn, mask, dt=dt, T=T)
    control = ControlSchedule(traj.times.copy(), np.array([fn(t) for t in traj.times]), grid)
    return TargetTrajectory(law, grid, mask, np.asarray(ybar0, dtype=float), fn, traj, control)


@dataclass
class ConditionReport:
    M_a: float
    grad_sup: float
    C: float
    lhs: float
    rhs: float
    a0: float

    @property
    def passes(self):
        return self.lhs <= self.rhs

    @property
    def rate_bound(self):
        """Decay rate a0/(2 C^2) that follows from the Poincare step."""
        return self.a0 / (2.0 * self.C**2)

    @property
    def displayed_rate(self):
        """The rate a0/C as written in the original energy inequality (dimensionally off)."""
        return self.a0 / self.C

    def to_kv(self):
        return {
            "M_a": self.M_a, "grad_sup": self.grad_sup, "poincare_C": self.C, "lhs": self.lhs,
            "rhs": self.rhs, "a0": self.a0, "pass": self.passes, "rate_bound": self.rate_bound,
            "displayed_rate": self.displayed_rate,
            "note": "rate_bound uses a0/(2C^2); displayed_rate a0/C kept for reference",
        }


def check_gradient_condition(law, target, grid, samples=10_000):
    """Evaluate ``M_a ||ybar_x||_inf <= a0 / (2 C(Omega))`` on a computed target."""
    Y = target.trajectory.values if isinstance(target, TargetTrajectory) else np.asarray(target)
    lo, hi = float(min(Y.min(), 0.0)), float(max(Y.max(), 0.0))
    M_a = float(np.max(np.abs(law.derivative(np.linspace(lo, hi, samples)))))
    g = max(sup_norm(gradient(row, grid)) for row in np.atleast_2d(Y))
    C = grid.L / math.pi
    return ConditionReport(M_a, g, C, M_a * g, law.a0 / (2.0 * C), law.a0)


@dataclass
class StabilizationResult:
    trajectory: Trajectory
    errors: np.ndarray
    rate: float
    condition: ConditionReport
    decayed: bool

    def rows(self):
        for t, e in zip(self.trajectory.times, self.errors):
            yield {"t": float(t), "error": float(e)}


def fit_decay_rate(times, errors):
    """Least-squares slope of -log e(t) over the second half of the window."""
    times = np.asarray(times)
    errors = np.asarray(errors)
    half = times >= times[0] + 0.5 * (times[-1] - times[0])
    sel = half & (errors > 0)
    if np.count_nonzero(sel) < 2:
        return float("nan")
    slope = np.polyfit(times[sel], -np.log(errors[sel]), 1)[0]
    return float(slope)


def stabilization_phase(law, grid, mask, y0, target, duration):
    """Run ``v = vbar`` for ``duration`` and measure the L2 decay of ``y - ybar``."""
    k1 = target.trajectory.index(target.trajectory.times[0] + duration)
    ybar, vbar = target.window(0, k1)
    cond = check_gradient_condition(law, target, grid)
    if not cond.passes:
        warnings.warn("target violates the gradient condition; decay is not guaranteed", RuntimeWarning)
    y = solve_forward(law, grid, y0, vbar, mask)
    errors = np.array([l2_norm(a - b, grid) for a, b in zip(y.values, ybar.values)])
    decayed = bool(errors[-1] <= errors[0] * (1.0 + 1e-12) + 1e-15)
    if cond.passes and not decayed:
        warnings.warn("L2 deviation grew although the gradient condition holds", RuntimeWarning)
    return StabilizationResult(y, errors, fit_decay_rate(y.times, errors), cond, decayed)


def _attempt(law, grid, mask, y0, target, T, tau, eps, term_tol):
    """One stabilize-then-control attempt; returns (status dict, pieces or None)."""
    tr = target.trajectory
    k2 = tr.index(T)
    k1 = tr.index(T - tau)
    row = {"T": float(T), "tau": float(tau)}
    if k1 > 0:
        stab = stabilization_phase(law, grid, mask, y0, target, T - tau)
        y_mid = stab.trajectory.final
        row["error_at_switch"] = float(stab.errors[-1])
    else:
        stab = None
        y_mid = np.asarray(y0, dtype=float)
        row["error_at_switch"] = l2_norm(y_mid - tr.values[0], grid)
    ybar_w, vbar_w = target.window(k1, k2)
    try:
        loc = exact_control_to_trajectory(law, grid, mask, y_mid, ybar_w, vbar_w, eps=eps,
                                          delta_target=np.inf)
    except (LocalControlFailure, IllConditioningError, SolverDivergenceError) as exc:
        row.update(status="local-control-failed", deviation=float("nan"), terminal_error=float("nan"),
                   min_control=float("nan"), reason=str(exc))
        return row, None
    row["deviation"] = sup_norm(loc.control.values - vbar_w.values)
    row["terminal_error"] = loc.terminal_error
    pieces = (stab, loc, target.window(0, k1)[1] if k1 > 0 else None)
    control = concatenate([pieces[2], loc.control]) if k1 > 0 else loc.control
    row["min_control"] = control.min_value
    row["status"] = "ok"
    return row, pieces


def _assemble(pieces, T, mask, row, cond):
    stab, loc, vbar_head = pieces
    if stab is not None:
        control = concatenate([vbar_head, loc.control])
        traj = concatenate([stab.trajectory, loc.trajectory])
    else:
        control, traj = loc.control, loc.trajectory
    notes = {"condition": cond.to_kv(), "switch_time": row["T"] - row["tau"]}
    if stab is not None:
        notes["decay_rate"] = stab.rate
    return GlobalControlResult(control, traj, float(T), loc.terminal_error, mask, notes=notes)


def track_trajectory(law, grid, mask, y0, target, T=None, tau=DEFAULT_TAU, eps=HUM_EPS,
                     term_tol=TERMINAL_TOL, T_cap=DEFAULT_T_CAP, search=True, require_condition=True):
    """Steer ``y0`` onto ``target`` at time T with a nonnegative control.

    Starting from ``T`` (default ``2*tau``), the horizon is doubled until the
    terminal correction stays within ``eta`` of ``vbar`` and the terminal
    error is below ``term_tol``. The target must be computed at least up to
    ``T_cap`` when ``search`` is on.

    Raises
    ------
    HypothesisViolation
        ``min vbar <= 0`` or the gradient condition fails (unless
        ``require_condition=False``).
    TrackingFailure
        The cap was reached; ``history`` lists every attempt.
    """
    eta = target.eta
    if eta <= 0.0:
        raise HypothesisViolation(f"target control reaches {eta:.3e} <= 0; need vbar >= eta > 0")
    if tau <= 0:
        raise InvalidParameterError("tau must be positive")
    cond = check_gradient_condition(law, target, grid)
    if require_condition and not cond.passes:
        raise HypothesisViolation(
            f"gradient condition fails: M_a*|ybar_x| = {cond.lhs:.3e} > a0/(2C) = {cond.rhs:.3e}"
        )
    T = 2.0 * tau if T is None else float(T)
    if T <= tau:
        raise InvalidParameterError("need T > tau")
    history = []
    while True:
        if T > target.horizon + 1e-12:
            raise TrackingFailure(f"target only computed up to t={target.horizon}", history)
        row, pieces = _attempt(law, grid, mask, y0, target, T, tau, eps, term_tol)
        history.append(row)
        ok = pieces is not None and row["deviation"] <= eta and row["terminal_error"] <= term_tol
        log.info("tracking attempt T=%g: %s", T, row)
        if ok:
            result = _assemble(pieces, T, mask, row, cond)
            result.log = history
            return result
        if not search or 2.0 * T > T_cap + 1e-12:
            raise TrackingFailure(f"no admissible control found up to T={T}", history)
        T *= 2.0


def required_horizon(law, grid, mask, y0, target, tau=DEFAULT_TAU, **kwargs):
    """Smallest horizon on the doubling ladder for which tracking succeeds."""
    return track_trajectory(law, grid, mask, y0, target, tau=tau, **kwargs).T
