"""Nonnegative control between two steady states by walking a path of steady states.

The path is cut into ``nbar`` pieces; on each unit window the local
controller moves the state from one steady state to the next while keeping
the control within ``eta`` of the (positive) steady control, which keeps the
assembled control nonnegative.
"""
import csv
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import HypothesisViolation, IllConditioningError, LocalControlFailure, PlanningFailure, StepFailure
from .fields import ControlSchedule, Trajectory, concatenate, time_ladder
from .grid import c2_proxy, l2_norm, sup_norm
from .local import HUM_EPS, TERMINAL_TOL, build_linearization, exact_control_to_trajectory, hum_null_control
from .solvers import solve_forward
from .steady import SteadyPath, build_path, path_modulus

log = logging.getLogger(__name__)

POSITIVITY_TOL = 1e-9
MAX_STEPS = 256


@dataclass
class StairCasePlan:
    path: SteadyPath
    nbar: int
    eta: float
    eta_omega: float
    increments: np.ndarray
    R: float
    gain: float
    threshold: float
    window: float = 1.0
    dt: float = 0.01


@dataclass
class GlobalControlResult:
    control: ControlSchedule
    trajectory: Trajectory
    T: float
    terminal_error: float
    mask: object
    log: List[dict] = field(default_factory=list)
    plan: Optional[StairCasePlan] = None
    notes: dict = field(default_factory=dict)

    @property
    def min_control(self):
        return self.control.min_value

    def log_to_csv(self, path):
        if not self.log:
            return
        keys = list(self.log[0])
        with open(path, "w", newline="") as fh:
            fh.write(f"# T={self.T!r} terminal_error={self.terminal_error!r}\n")
            w = csv.writer(fh)
            w.writerow(keys)
            for row in self.log:
                w.writerow([f"{row[k]:.17g}" if isinstance(row[k], float) else row[k] for k in keys])


def _probe_gain(law, grid, mask, path, window, dt, eps):
    """Sup-norm control gain of a unit deviation along the path direction."""
    direction = path.states[-1].y - path.states[0].y
    if sup_norm(direction) == 0.0:
        return 0.0
    z0 = direction / sup_norm(direction)
    times = time_ladder(0.0, window, dt)
    ybar = Trajectory(times, np.tile(path.states[0].y, (times.size, 1)), grid)
    lin = build_linearization(law, ybar, np.zeros_like(ybar.values))
    hum = hum_null_control(lin, mask, z0, eps=eps)
    return sup_norm(hum.control.values)


def plan_staircase(path, law, grid, mask, window=1.0, dt=0.01, eps=HUM_EPS, safety=2.0,
                   max_steps=MAX_STEPS):
    """Choose the number of stair steps.

    ``nbar`` starts at 1 and doubles until every increment between
    consecutive steady states (discrete C2 proxy) is below
    ``eta / (safety * gain)``, where ``gain`` is the measured sup-norm
    control cost of a unit deviation.
    """
    mod = path_modulus(path, grid, mask)
    eta = mod.eta
    if eta <= 0.0:
        raise HypothesisViolation(
            f"steady controls along the path reach {eta:.3e} <= 0: the uniform positivity "
            "floor v^s >= eta > 0 required for the stair-case construction fails"
        )
    gain = _probe_gain(law, grid, mask, path, window, dt, eps)
    threshold = np.inf if gain == 0.0 else eta / (safety * gain)
    nbar = 1
    while True:
        stairs = path if path.m == nbar else build_path(law, grid, mask, path.v0, path.v1, nbar, path.rule)
        incs = np.array([c2_proxy(stairs.states[k + 1].y - stairs.states[k].y, grid) for k in range(nbar)])
        if incs.max() <= threshold:
            break
        nbar *= 2
        if nbar > max_steps:
            raise PlanningFailure(
                f"increments still above {threshold:.3e} at nbar={nbar // 2} (cap {max_steps})"
            )
    R = max(c2_proxy(st.y, grid) for st in stairs.states)
    log.info("stair-case plan: nbar=%d eta=%.3g gain=%.3g threshold=%.3g", nbar, eta, gain, threshold)
    return StairCasePlan(stairs, nbar, eta, mod.eta_omega, incs, R, gain, threshold, window, dt)


def run_staircase(plan, law, grid, mask, eps=HUM_EPS, term_tol=TERMINAL_TOL):
    """Chain local controls along the planned stairs.

    Raises
    ------
    StepFailure
        If some step needs ``||v_k - vbar_k||_inf > eta`` or its local
        control fails; the exception suggests doubling ``nbar``.
    """
    stairs, nbar, eta, w, dt = plan.path, plan.nbar, plan.eta, plan.window, plan.dt
    y = stairs.states[0].y.copy()
    controls, trajs, rows = [], [], []
    for k in range(1, nbar + 1):
        target_state = stairs.states[k]
        times = time_ladder((k - 1) * w, k * w, dt)
        target = Trajectory(times, np.tile(target_state.y, (times.size, 1)), grid)
        vbar = ControlSchedule.constant(times, target_state.v, grid)
        try:
            res = exact_control_to_trajectory(law, grid, mask, y, target, vbar, eps=eps, delta_target=term_tol)
        except (LocalControlFailure, IllConditioningError) as exc:
            raise StepFailure(f"step {k}: local control failed ({exc}); retry with nbar={2 * nbar}",
                              k, float("nan"), eta, 2 * nbar) from exc
        dev = sup_norm(res.control.values - vbar.values)
        rows.append({
            "k": k,
            "increment": float(plan.increments[k - 1]),
            "deviation": dev,
            "min_control": res.control.min_value,
            "terminal_l2": res.terminal_error,
            "fixed_point_sweeps": res.iterations,
        })
        log.info("step %d/%d: deviation %.3e (eta %.3e)", k, nbar, dev, eta)
        if dev > eta:
            raise StepFailure(
                f"step {k}: ||v_k - vbar_k||_inf = {dev:.3e} exceeds eta = {eta:.3e}; retry with nbar={2 * nbar}",
                k, dev, eta, 2 * nbar,
            )
        controls.append(res.control)
        trajs.append(res.trajectory)
        y = res.trajectory.final
    v = concatenate(controls)
    traj = concatenate(trajs)
    check = solve_forward(law, grid, stairs.states[0].y, v, mask)
    target_final = stairs.states[-1].y
    err = l2_norm(check.final - target_final, grid)
    return GlobalControlResult(
        control=v,
        trajectory=traj,
        T=nbar * w,
        terminal_error=err,
        mask=mask,
        log=rows,
        plan=plan,
        notes={"resolve_drift": sup_norm(check.values - traj.values),
               "norm_substitution": "sup / C2-proxy norms in place of Hoelder norms"},
    )


def control_between_steady_states(law, grid, mask, v0, v1, m=8, window=1.0, dt=0.01, eps=HUM_EPS,
                                  term_tol=TERMINAL_TOL, max_steps=MAX_STEPS, rule=None):
    """Plan, run, and double ``nbar`` on step failure until the run succeeds."""
    path = build_path(law, grid, mask, v0, v1, m, rule)
    plan = plan_staircase(path, law, grid, mask, window, dt, eps, max_steps=max_steps)
    while True:
        try:
            return run_staircase(plan, law, grid, mask, eps, term_tol)
        except StepFailure as exc:
            if exc.suggested_steps > max_steps:
                raise PlanningFailure(f"step failures persist up to nbar={plan.nbar}") from exc
            stairs = build_path(law, grid, mask, v0, v1, exc.suggested_steps, path.rule)
            incs = np.array([c2_proxy(stairs.states[k + 1].y - stairs.states[k].y, grid)
                             for k in range(stairs.m)])
            plan = StairCasePlan(stairs, stairs.m, plan.eta, plan.eta_omega, incs, plan.R, plan.gain,
                                 plan.threshold, window, dt)


@dataclass
class NonnegativityReport:
    min_all: float
    min_omega: float
    argmin: tuple

    @property
    def holds(self):
        return self.min_all >= -POSITIVITY_TOL


def verify_nonnegativity(result):
    """Exact minima of the stored control over the domain and over omega."""
    V = result.control.values
    k, i = np.unravel_index(int(np.argmin(V)), V.shape)
    sel = result.mask.support
    min_omega = float(V[:, sel].min()) if sel.any() else float("nan")
    return NonnegativityReport(float(V[k, i]), min_omega,
                               (float(result.control.times[k]), float(result.control.grid.x[i])))
