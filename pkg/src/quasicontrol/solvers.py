"""Time stepping for the quasilinear heat equation and its linearizations.

Conventions shared by every solver here:

* implicit Euler in the diffusion part, with spatial coefficients taken at
  the new level ``t_{k+1}``;
* the step ``t_k -> t_{k+1}`` is forced by ``rho * v(., t_k)``;
* a linear step reads ``M_k z_{k+1} = z_k + dt * rho * u_k`` and the discrete
  adjoint is ``M_k^T p_k = p_{k+1}``, so that
  ``<z_K, p_K> - <z_0, p_0> = sum_k dt <rho u_k, p_k>`` holds exactly.
"""
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .errors import DimensionError, InvalidParameterError, SingularSystemError, SolverDivergenceError
from .fields import ControlSchedule, Trajectory, time_ladder
from .laws import kirchhoff

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
COMPARISON_TOL = 1e-9


# ---------------------------------------------------------------------------
# tridiagonal building blocks

def laplacian_of_product(c, h):
    """Bands of ``w -> Delta_h(c * w)`` with zero ghost values."""
    c = np.asarray(c, dtype=float)
    s = 1.0 / h**2
    return c[:-1] * s, -2.0 * c * s, c[1:] * s


def divergence_operator(alpha, drift, h):
    """Bands of ``z -> (alpha z_x)_x - (drift z)_x``.

    Diffusion uses face averages of ``alpha`` (the boundary faces reuse the
    nearest interior value); the drift flux is the face-interpolated product
    ``(drift_i z_i + drift_{i+1} z_{i+1}) / 2``.
    """
    alpha = np.asarray(alpha, dtype=float)
    g = np.asarray(drift, dtype=float)
    faces = np.concatenate(([alpha[0]], 0.5 * (alpha[:-1] + alpha[1:]), [alpha[-1]]))
    s = 1.0 / h**2
    lower = faces[1:-1] * s + g[:-1] / (2.0 * h)
    diag = -(faces[:-1] + faces[1:]) * s
    upper = faces[1:-1] * s - g[1:] / (2.0 * h)
    return lower, diag, upper


def apply_tridiagonal(bands, z):
    lower, diag, upper = bands
    out = diag * z
    out[1:] += lower * z[:-1]
    out[:-1] += upper * z[1:]
    return out


def tridiagonal_solve(lower, diag, upper, rhs):
    _, _, _, x, info = lapack.dgtsv(lower, diag, upper, rhs)
    if info != 0:
        raise SingularSystemError(f"tridiagonal solve failed (lapack info={info})")
    return x


class StepOperators:
    """Factorized implicit-Euler matrices ``M_k = I - dt*A_{k+1}``, k = 0..K-1.

    Kept so the adjoint can be run as the exact transpose of the forward
    scheme.
    """

    def __init__(self, lower, diag, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.diag = np.asarray(diag, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.K, self.n = self.diag.shape
        self._lu = []
        for k in range(self.K):
            dl, d, du, du2, ipiv, info = lapack.dgttrf(self.lower[k], self.diag[k], self.upper[k])
            if info != 0:
                raise SingularSystemError(f"step matrix {k} is singular (lapack info={info})")
            self._lu.append((dl, d, du, du2, ipiv))

    @classmethod
    def from_generators(cls, generators, dt):
        """Build from per-step operator bands ``A_{k+1}`` (list of (lower, diag, upper))."""
        lowers, diags, uppers = [], [], []
        for lower, diag, upper in generators:
            lowers.append(-dt * lower)
            diags.append(1.0 - dt * diag)
            uppers.append(-dt * upper)
        return cls(np.array(lowers), np.array(diags), np.array(uppers))

    def __len__(self):
        return self.K

    def solve(self, k, rhs):
        x, info = lapack.dgttrs(*self._lu[k], rhs, trans="N")
        return x

    def solve_transpose(self, k, rhs):
        x, info = lapack.dgttrs(*self._lu[k], rhs, trans="T")
        return x

    def matvec(self, k, z):
        return apply_tridiagonal((self.lower[k], self.diag[k], self.upper[k]), z)

    def dense(self, k):
        return (np.diag(self.diag[k]) + np.diag(self.lower[k], -1) + np.diag(self.upper[k], 1))


# ---------------------------------------------------------------------------
# control arguments

def _resolve_ladder(grid, v, dt, T, t0):
    if isinstance(v, ControlSchedule):
        if v.grid.n != grid.n:
            raise DimensionError("control schedule lives on a different grid")
        if dt is not None and abs(v.dt - dt) > 1e-12 * dt:
            raise InvalidParameterError("dt disagrees with the control schedule ladder")
        return v.times, v.values
    if dt is None or T is None:
        raise InvalidParameterError("dt and T are required unless a ControlSchedule is given")
    times = time_ladder(t0, t0 + T, dt)
    if v is None:
        values = np.zeros((times.size, grid.n))
    elif callable(v):
        values = np.array([v(t) for t in times], dtype=float)
    else:
        v = np.asarray(v, dtype=float)
        values = np.tile(v, (times.size, 1)) if v.ndim == 1 else v
    if values.shape != (times.size, grid.n):
        raise DimensionError(f"control shape {values.shape} does not match ladder ({times.size}, {grid.n})")
    return times, values


# ---------------------------------------------------------------------------
# nonlinear forward solver

def newton_step(law, grid, b, dt, y_guess, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER, step_index=0):
    """Solve ``y - dt*Delta_h Phi(y) = b`` by Newton with a tridiagonal Jacobian."""
    h2 = grid.h**2
    y = np.array(y_guess, dtype=float)
    res = np.inf
    for _ in range(max_iter + 1):
        w = kirchhoff(law, y)
        lap = -2.0 * w
        lap[1:] += w[:-1]
        lap[:-1] += w[1:]
        F = y - dt * lap / h2 - b
        res = float(np.max(np.abs(F)))
        if res <= tol:
            return y
        if not np.isfinite(res):
            break
        a = law(y)
        r = dt / h2
        y = y + tridiagonal_solve(-r * a[:-1], 1.0 + 2.0 * r * a, -r * a[1:], -F)
    raise SolverDivergenceError(step_index, res)


def solve_forward(law, grid, y0, v=None, mask=None, dt=None, T=None, t0=0.0):
    """Implicit Euler solution of ``y_t = Delta_h Phi(y) + rho * v``.

    Parameters
    ----------
    law : DiffusionLaw
    grid : Grid
    y0 : array (n,)
        Initial state on the interior nodes.
    v : ControlSchedule, array, callable or None
        Control. A schedule fixes the time ladder; an ``(n,)`` array is held
        constant; a callable is sampled as ``v(t)``; ``None`` means v = 0.
    mask : ControlMask or None
        ``None`` disables the control term.
    dt, T : float
        Step and horizon, required unless ``v`` is a schedule.

    Returns
    -------
    Trajectory
    """
    times, values = _resolve_ladder(grid, v, dt, T, t0)
    step = times[1] - times[0]
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (grid.n,):
        raise DimensionError(f"initial state has shape {y0.shape}, grid has {grid.n} nodes")
    if not np.all(np.isfinite(y0)):
        raise InvalidParameterError("initial state must be finite")
    rho = np.zeros(grid.n) if mask is None else mask.rho
    out = np.empty((times.size, grid.n))
    out[0] = y0
    for k in range(times.size - 1):
        b = out[k] + step * rho * values[k]
        out[k + 1] = newton_step(law, grid, b, step, out[k], step_index=k)
    return Trajectory(times, out, grid, "forward")


# ---------------------------------------------------------------------------
# linear solvers

@dataclass
class LinearSolution:
    trajectory: Trajectory
    steps: StepOperators


def _per_level(field, levels, n, name):
    field = np.asarray(field, dtype=float)
    if field.ndim == 0:
        field = np.full(n, float(field))
    if field.ndim == 1:
        field = np.tile(field, (levels, 1))
    if field.shape != (levels, n):
        raise DimensionError(f"{name} must have shape ({levels}, {n}), got {field.shape}")
    return field


def drift_is_monotone(alpha, drift, h):
    """True when ``h*|drift| <= 2*alpha`` at every node (the step matrix is an M-matrix)."""
    return bool(np.all(h * np.abs(drift) <= 2.0 * np.asarray(alpha)))


def divergence_steps(grid, alpha, drift, dt):
    """Step operators of the divergence-form linearized equation."""
    K = alpha.shape[0] - 1
    gens = [divergence_operator(alpha[k + 1], drift[k + 1], grid.h) for k in range(K)]
    return StepOperators.from_generators(gens, dt)


def kirchhoff_steps(grid, coeff, dt):
    """Step operators of ``z_t = Delta_h(coeff * z)``; ``coeff`` has one row per level."""
    K = coeff.shape[0] - 1
    gens = [laplacian_of_product(coeff[k + 1], grid.h) for k in range(K)]
    return StepOperators.from_generators(gens, dt)


def propagate(steps, z0, forcing, dt):
    """Run ``M_k z_{k+1} = z_k + dt * forcing_k`` for k = 0..K-1."""
    out = np.empty((steps.K + 1, steps.n))
    out[0] = z0
    for k in range(steps.K):
        out[k + 1] = steps.solve(k, out[k] + dt * forcing[k])
    return out


def solve_linearized(grid, alpha, drift, z0, u=None, mask=None, dt=None, T=None, t0=0.0):
    """Implicit Euler for ``z_t - (alpha z_x)_x + (drift z)_x = rho * u``.

    ``alpha`` and ``drift`` are given per time level (shape ``(K+1, n)``) or
    as a single field held constant. The factorized step matrices are
    returned with the trajectory so :func:`solve_adjoint_discrete` can reuse
    them.
    """
    times, uvals = _resolve_ladder(grid, u, dt, T, t0)
    step = times[1] - times[0]
    alpha = _per_level(alpha, times.size, grid.n, "alpha")
    drift = _per_level(drift, times.size, grid.n, "drift")
    if np.any(alpha <= 0):
        raise InvalidParameterError("diffusion coefficient must be positive")
    if not drift_is_monotone(alpha, drift, grid.h):
        warnings.warn(
            "drift exceeds 2*alpha/h somewhere: step matrices are not M-matrices", RuntimeWarning
        )
    steps = divergence_steps(grid, alpha, drift, step)
    rho = np.zeros(grid.n) if mask is None else mask.rho
    values = propagate(steps, np.asarray(z0, dtype=float), rho * uvals, step)
    return LinearSolution(Trajectory(times, values, grid, "forward"), steps)


def solve_adjoint_discrete(steps, pT, grid, times=None):
    """Backward sweep ``M_k^T p_k = p_{k+1}`` from ``p_K = pT``."""
    pT = np.asarray(pT, dtype=float)
    if pT.shape != (steps.n,) or grid.n != steps.n:
        raise DimensionError("terminal datum does not match the step operators")
    if times is None:
        times = np.arange(steps.K + 1, dtype=float)
    times = np.asarray(times, dtype=float)
    if times.size != steps.K + 1:
        raise DimensionError(f"ladder has {times.size} levels but there are {steps.K} step matrices")
    out = np.empty((steps.K + 1, steps.n))
    out[-1] = pT
    for k in range(steps.K - 1, -1, -1):
        out[k] = steps.solve_transpose(k, out[k + 1])
    return Trajectory(times, out, grid, "backward")


# ---------------------------------------------------------------------------
# comparison

@dataclass
class ComparisonReport:
    holds: bool
    worst_violation: float
    min_gap: float
    location: tuple

    def __bool__(self):
        return self.holds


def check_comparison(traj_hi, traj_lo, tol=COMPARISON_TOL):
    """Check ``traj_hi >= traj_lo - tol`` at every node and level.

    ``worst_violation`` is ``max(0, max(lo - hi))``; ``location`` is the
    (time, x) of the smallest gap.
    """
    hi = traj_hi.values if isinstance(traj_hi, Trajectory) else np.asarray(traj_hi)
    lo = traj_lo.values if isinstance(traj_lo, Trajectory) else np.asarray(traj_lo)
    if hi.shape != lo.shape:
        raise DimensionError(f"cannot compare shapes {hi.shape} and {lo.shape}")
    if isinstance(traj_hi, Trajectory) and isinstance(traj_lo, Trajectory):
        if not np.allclose(traj_hi.times, traj_lo.times, rtol=0, atol=1e-12):
            raise DimensionError("trajectories use different time ladders")
    gap = hi - lo
    k, i = np.unravel_index(int(np.argmin(gap)), gap.shape)
    min_gap = float(gap[k, i])
    worst = max(0.0, -min_gap)
    loc = (k, i)
    if isinstance(traj_hi, Trajectory):
        loc = (float(traj_hi.times[k]), float(traj_hi.grid.x[i]))
    return ComparisonReport(worst <= tol, worst, min_gap, loc)
