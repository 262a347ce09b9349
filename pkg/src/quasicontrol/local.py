"""Local exact control to trajectories.

The deviation ``z = y - ybar`` obeys a linear equation once the coefficients
are frozen along a guess ``w``. Each guess is driven to zero by penalized
HUM (conjugate gradient on the terminal adjoint datum), and the guess is
updated with the controlled state until it stops moving.

Two frozen-coefficient forms are available:

``"kirchhoff"`` (default)
    ``z_t = Delta_h(c z) + rho u`` with ``c = (Phi(ybar+w) - Phi(ybar))/w``.
    At a fixed point this is *exactly* the nonlinear discrete scheme, so the
    nonlinear terminal check inherits the HUM accuracy.
``"divergence"``
    ``z_t = (alpha_w z_x)_x - (beta_w ybar_x z)_x + rho u`` with
    ``alpha_w = a(w+ybar)`` and ``beta_w = -(a(w+ybar)-a(ybar))/w``; a
    different O(h^2) discretization of the same linear PDE.
"""
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import List

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionError, GeometryError, IllConditioningError, InvalidParameterError, LocalControlFailure
from .fields import ControlSchedule, Trajectory
from .grid import gradient, l2_norm, sup_norm
from .laws import derivative_secant, kirchhoff_secant
from .solvers import divergence_steps, kirchhoff_steps, propagate, solve_adjoint_discrete, solve_forward

HUM_EPS = 1e-8
CG_TOL = 1e-10
CG_MAX_ITER = 500
FP_TOL = 1e-8
FP_MAX_ITER = 30
TERMINAL_TOL = 1e-6


# ---------------------------------------------------------------------------
# linearization

@dataclass
class Linearization:
    grid: object
    times: np.ndarray
    ybar: np.ndarray
    w: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    drift: np.ndarray
    secant: np.ndarray
    form: str = "kirchhoff"

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def B(self):
        """1 + |w|^2 + |ybar_x|^2 with discrete sup norms of w and its x/t differences."""
        w = self.w
        parts = [sup_norm(w)]
        if w.shape[0] > 1:
            parts.append(sup_norm(np.diff(w, axis=0) / self.dt))
        parts.append(max(sup_norm(gradient(row, self.grid)) for row in w))
        gy = max(sup_norm(gradient(row, self.grid)) for row in self.ybar)
        return 1.0 + max(parts) ** 2 + gy**2

    @cached_property
    def steps(self):
        if self.form == "kirchhoff":
            return kirchhoff_steps(self.grid, self.secant, self.dt)
        return divergence_steps(self.grid, self.alpha, self.drift, self.dt)


def build_linearization(law, ybar, w, form="kirchhoff"):
    """Freeze the coefficients of the deviation equation along ``w``.

    Parameters
    ----------
    ybar, w : Trajectory
        Target trajectory and frozen deviation on the same ladder.
    form : {"kirchhoff", "divergence"}
    """
    if form not in ("kirchhoff", "divergence"):
        raise InvalidParameterError(f"unknown linearization form {form!r}")
    Y = ybar.values
    W = w.values if isinstance(w, Trajectory) else np.asarray(w, dtype=float)
    if W.shape != Y.shape:
        raise DimensionError(f"frozen deviation shape {W.shape} does not match target {Y.shape}")
    if isinstance(w, Trajectory) and not np.allclose(w.times, ybar.times, rtol=0, atol=1e-12):
        raise DimensionError("target and frozen deviation use different ladders")
    grid = ybar.grid
    alpha = law(Y + W)
    beta = -derivative_secant(law, Y, W)
    gy = np.array([gradient(row, grid)[1:-1] for row in Y])
    return Linearization(grid, ybar.times.copy(), Y, W, alpha, beta, beta * gy,
                         kirchhoff_secant(law, Y, W), form)


# ---------------------------------------------------------------------------
# penalized HUM

@dataclass
class HumResult:
    control: ControlSchedule
    state: Trajectory
    adjoint: Trajectory
    pT: np.ndarray
    eps: float
    terminal_norm: float
    free_terminal_norm: float
    iterations: int
    cg_trace: List[float]
    initial_norm: float

    @property
    def gain(self):
        """Measured ||u||_L2 / ||z0||_L2 (the empirical control-cost ratio)."""
        if self.initial_norm == 0.0:
            return 0.0
        u = self.control.values[:-1]
        dt = self.control.dt
        g = self.control.grid
        return math.sqrt(dt * sum(l2_norm(row, g) ** 2 for row in u)) / self.initial_norm


def _cg(apply, b, inner, tol, max_iter):
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = math.sqrt(inner(b, b))
    trace = [1.0]
    if bnorm == 0.0:
        return x, 0, trace
    d = r.copy()
    rr = inner(r, r)
    for it in range(1, max_iter + 1):
        Ad = apply(d)
        dAd = inner(d, Ad)
        if dAd <= 0.0:
            raise IllConditioningError(f"CG breakdown at iteration {it} (d^T A d = {dAd:.3e})", trace)
        step = rr / dAd
        x += step * d
        r -= step * Ad
        rr_new = inner(r, r)
        trace.append(math.sqrt(rr_new) / bnorm)
        if trace[-1] <= tol:
            return x, it, trace
        d = r + (rr_new / rr) * d
        rr = rr_new
    raise IllConditioningError(
        f"CG stagnated: relative residual {trace[-1]:.3e} after {max_iter} iterations", trace
    )


def hum_null_control(lin, mask, z0, window=None, eps=HUM_EPS, cg_tol=CG_TOL, max_iter=CG_MAX_ITER):
    """Penalized HUM null control of the frozen linear system.

    Solves ``(G + eps I) pT = -z_free(t1)`` by conjugate gradient, where
    ``G pT`` is the terminal state reached from zero under ``u = rho * p``
    and ``p`` is the discrete adjoint started from ``pT``.
    """
    if eps <= 0:
        raise InvalidParameterError("penalty eps must be positive")
    if window is not None:
        t0, t1 = window
        if abs(t0 - lin.times[0]) > 1e-9 or abs(t1 - lin.times[-1]) > 1e-9:
            raise DimensionError("window does not match the linearization ladder")
    grid, steps, dt, rho = lin.grid, lin.steps, lin.dt, mask.rho
    z0 = np.asarray(z0, dtype=float)
    if not np.all(np.isfinite(z0)):
        raise InvalidParameterError("initial deviation must be finite")
    zero_forcing = np.zeros((steps.K, grid.n))
    z_free = propagate(steps, z0, zero_forcing, dt)[-1]

    def gram(pT):
        P = solve_adjoint_discrete(steps, pT, grid).values
        return propagate(steps, np.zeros(grid.n), rho * rho * P[:-1], dt)[-1]

    def inner(a, b):
        return grid.h * float(np.dot(a, b))

    pT, its, trace = _cg(lambda p: gram(p) + eps * p, -z_free, inner, cg_tol, max_iter)
    adj = solve_adjoint_discrete(steps, pT, grid, lin.times)
    U = rho * adj.values
    Z = propagate(steps, z0, rho * U[:-1], dt)
    return HumResult(
        control=ControlSchedule(lin.times.copy(), U, grid),
        state=Trajectory(lin.times.copy(), Z, grid),
        adjoint=adj,
        pT=pT,
        eps=eps,
        terminal_norm=l2_norm(Z[-1], grid),
        free_terminal_norm=l2_norm(z_free, grid),
        iterations=its,
        cg_trace=trace,
        initial_norm=l2_norm(z0, grid),
    )


def hum_objective(lin, mask, z0, u, eps):
    """0.5*||u||^2_{L2(Q)} + ||z(t1)||^2/(2 eps) for a control schedule ``u``."""
    grid, steps, dt = lin.grid, lin.steps, lin.dt
    U = u.values if isinstance(u, ControlSchedule) else np.asarray(u)
    z = propagate(steps, np.asarray(z0, dtype=float), mask.rho * U[:-1], dt)[-1]
    cost = dt * sum(l2_norm(row, grid) ** 2 for row in U[:-1])
    return 0.5 * cost + l2_norm(z, grid) ** 2 / (2.0 * eps)


# ---------------------------------------------------------------------------
# nonlinear local control

@dataclass
class LocalControlResult:
    control: ControlSchedule
    trajectory: Trajectory
    hum: HumResult
    iterations: int
    history: List[float]
    terminal_error: float
    deviation_sup: float
    initial_deviation_sup: float

    @property
    def gain(self):
        """||v - vbar||_inf / ||y0 - ybar(t0)||_inf."""
        if self.initial_deviation_sup == 0.0:
            return 0.0
        return self.deviation_sup / self.initial_deviation_sup


def exact_control_to_trajectory(law, grid, mask, y0, target, vbar, eps=HUM_EPS, fp_tol=FP_TOL,
                                max_iter=FP_MAX_ITER, delta_target=TERMINAL_TOL, seed="zero",
                                form="kirchhoff", cg_tol=CG_TOL):
    """Steer ``y0`` onto ``target`` at the end of the target's window.

    Parameters
    ----------
    target : Trajectory
        Target states on the window ladder.
    vbar : ControlSchedule
        The target's control on the same ladder.
    seed : {"zero", "initial"}
        Initial guess for the frozen deviation: zero, or ``y0 - ybar(t0)``
        held constant in time.

    Returns
    -------
    LocalControlResult
        ``control`` is ``vbar + u``; ``trajectory`` is the nonlinear solve
        under that control.

    Raises
    ------
    LocalControlFailure
        If the relinearization does not settle within ``max_iter`` sweeps or
        the nonlinear terminal error exceeds ``delta_target``.
    """
    z0 = np.asarray(y0, dtype=float) - target.initial
    if seed == "zero":
        w = np.zeros_like(target.values)
    elif seed == "initial":
        w = np.tile(z0, (len(target), 1))
    else:
        raise InvalidParameterError(f"unknown fixed-point seed {seed!r}")
    history = []
    hum = None
    for it in range(1, max_iter + 1):
        lin = build_linearization(law, target, w, form)
        try:
            hum = hum_null_control(lin, mask, z0, eps=eps, cg_tol=cg_tol)
        except IllConditioningError as exc:
            raise LocalControlFailure(f"HUM failed at fixed-point sweep {it}: {exc}", history) from exc
        z = hum.state.values
        change = sup_norm(z - w)
        history.append(change)
        w = z
        if not np.isfinite(change):
            break
        if change <= fp_tol:
            break
    else:
        raise LocalControlFailure(
            f"relinearization did not settle after {max_iter} sweeps (last change {history[-1]:.3e})",
            history,
        )
    if not np.isfinite(history[-1]):
        raise LocalControlFailure("relinearization diverged", history)
    v = ControlSchedule(target.times.copy(), vbar.values + hum.control.values, grid)
    y = solve_forward(law, grid, y0, v, mask)
    err = l2_norm(y.final - target.final, grid)
    if err > delta_target:
        raise LocalControlFailure(
            f"nonlinear terminal error {err:.3e} exceeds {delta_target:.1e}", history + [err]
        )
    return LocalControlResult(v, y, hum, it, history, err, sup_norm(hum.control.values), sup_norm(z0))


# ---------------------------------------------------------------------------
# Carleman weights and the observability probe

@dataclass
class CarlemanWeights:
    alpha0: np.ndarray
    times: np.ndarray
    phi: np.ndarray
    alpha: np.ndarray
    log_phi: np.ndarray
    lam: float
    T: float
    omega0: tuple


def carleman_weights(grid, omega0, lam, T, dt):
    """Weights phi = e^{lam*a0}/(t(T-t)), alpha = (e^{lam*a0} - e^{2 lam |a0|})/(t(T-t)).

    ``a0(x) = sin(pi x / L)``, whose only critical point is L/2, so
    ``omega0`` must contain the midpoint. Weights are sampled at the
    interior levels ``t_k = k*dt``, 0 < t_k < T.
    """
    a, b = omega0
    if not (0.0 < a < grid.L / 2 < b < grid.L):
        raise GeometryError(f"omega0={omega0} must contain the midpoint {grid.L / 2}")
    if lam <= 0:
        raise InvalidParameterError("lambda must be positive")
    K = int(round(T / dt))
    times = dt * np.arange(1, K)
    alpha0 = np.sin(np.pi * grid.x / grid.L)
    sup_a0 = 1.0
    tt = (times * (T - times))[:, None]
    e = np.exp(lam * alpha0)[None, :]
    phi = e / tt
    alpha = (e - math.exp(2.0 * lam * sup_a0)) / tt
    log_phi = lam * alpha0[None, :] - np.log(tt)
    return CarlemanWeights(alpha0, times, phi, alpha, log_phi, float(lam), float(T), tuple(omega0))


@dataclass
class ObservabilityReport:
    s: float
    lam: float
    numerators: np.ndarray
    log10_denominators: np.ndarray
    log10_ratios: np.ndarray
    B: float

    @property
    def ratios(self):
        with np.errstate(over="ignore"):
            return np.power(10.0, self.log10_ratios)

    @property
    def max_ratio(self):
        return float(self.ratios.max())

    @property
    def max_log10_ratio(self):
        return float(self.log10_ratios.max())

    def rows(self):
        for j in range(self.numerators.size):
            yield {"sample": j, "numerator": self.numerators[j],
                   "log10_denominator": self.log10_denominators[j],
                   "log10_ratio": self.log10_ratios[j], "ratio": self.ratios[j]}


def observation_log_integral(p, weights, select, s, dt, h):
    """log of int_{omega1 x (0,T)} e^{2 s alpha} phi^3 |p|^2 (trapezoid over interior levels)."""
    P = p[1:-1][:, select]
    with np.errstate(divide="ignore"):
        logp2 = np.log(P * P)
    log_int = 2.0 * s * weights.alpha[:, select] + 3.0 * weights.log_phi[:, select] + logp2
    tw = np.full(P.shape[0], dt)
    tw[0] = tw[-1] = 0.5 * dt
    return float(logsumexp(log_int + np.log(tw)[:, None] + math.log(h)))


def empirical_observability(lin, weights, select, s, n_samples, seed=0):
    """Ratios ||p(0)||^2 / weighted observation of p over omega1 x (0,T).

    Terminal data are Gaussian fields normalized to unit L2 norm. Ratios
    are computed in log space; the linear ``ratios`` overflow to +inf when
    the weights are too small for double precision, in which case a
    warning is issued.
    """
    if s <= 0 or n_samples < 1:
        raise InvalidParameterError("need s > 0 and at least one sample")
    if weights.times.size != lin.times.size - 2:
        raise DimensionError("Carleman weights and linearization use different ladders")
    select = select.plateau if hasattr(select, "plateau") else np.asarray(select, dtype=bool)
    grid = lin.grid
    rng = np.random.default_rng(seed)
    nums, logden = [], []
    for _ in range(n_samples):
        pT = rng.standard_normal(grid.n)
        pT /= l2_norm(pT, grid)
        p = solve_adjoint_discrete(lin.steps, pT, grid, lin.times).values
        nums.append(l2_norm(p[0], grid) ** 2)
        logden.append(observation_log_integral(p, weights, select, s, lin.dt, grid.h))
    nums = np.array(nums)
    logden = np.array(logden)
    log10_ratio = (np.log(nums) - logden) / math.log(10.0)
    report = ObservabilityReport(float(s), weights.lam, nums, logden / math.log(10.0), log10_ratio, lin.B)
    if np.any(logden < math.log(np.finfo(float).tiny)):
        warnings.warn(
            f"observation weights underflow double precision at s={s}, lambda={weights.lam}; "
            "ratios reported as +inf (log10 ratios remain finite)", RuntimeWarning,
        )
    return report
