"""Steady states of the controlled equation and paths between them.

``-(a(y) y')' = v * rho`` becomes ``-Delta_h w = v * rho`` with ``w = Phi(y)``,
so a steady state costs one tridiagonal Poisson solve and one pointwise
inversion of the Kirchhoff primitive.
"""
import csv
from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np

from .errors import InvalidParameterError
from .grid import c2_proxy
from .laws import kirchhoff, kirchhoff_inverse
from .solvers import tridiagonal_solve


@dataclass
class SteadyState:
    y: np.ndarray
    v: np.ndarray
    residual: float


def steady_residual(law, grid, mask, state):
    """sup_i |Delta_h Phi(y)_i + (v rho)_i|."""
    w = grid.pad(kirchhoff(law, state.y))
    lap = (w[2:] - 2.0 * w[1:-1] + w[:-2]) / grid.h**2
    return float(np.max(np.abs(lap + np.asarray(state.v) * mask.rho)))


def solve_steady(law, grid, mask, vbar):
    """Steady state driven by the steady control ``vbar`` (scalar or field)."""
    vbar = np.broadcast_to(np.asarray(vbar, dtype=float), (grid.n,)).copy()
    if not np.all(np.isfinite(vbar)):
        raise InvalidParameterError("steady control must be finite")
    n, s = grid.n, 1.0 / grid.h**2
    w = tridiagonal_solve(np.full(n - 1, -s), np.full(n, 2.0 * s), np.full(n - 1, -s), vbar * mask.rho)
    y = kirchhoff_inverse(law, w)
    state = SteadyState(y, vbar, 0.0)
    state.residual = steady_residual(law, grid, mask, state)
    return state


def linear_rule(v0, v1):
    """The default control path (1 - s) v0 + s v1."""
    v0 = np.asarray(v0, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    return lambda s: (1.0 - s) * v0 + s * v1


@dataclass
class SteadyPath:
    v0: np.ndarray
    v1: np.ndarray
    rule: Callable
    m: int
    s: np.ndarray
    states: List[SteadyState] = field(default_factory=list)

    @property
    def ys(self):
        return np.array([st.y for st in self.states])

    @property
    def controls(self):
        return np.array([st.v for st in self.states])

    def state_at(self, s, law, grid, mask):
        """Solve the steady state at an arbitrary path parameter."""
        return solve_steady(law, grid, mask, self.rule(s))


def build_path(law, grid, mask, v0, v1, m, rule=None):
    """Sample gamma(j/m) = Lambda(lambda(j/m)) for j = 0..m."""
    if int(m) != m or m < 1:
        raise InvalidParameterError(f"need at least one path segment, got m={m}")
    v0 = np.broadcast_to(np.asarray(v0, dtype=float), (grid.n,)).copy()
    v1 = np.broadcast_to(np.asarray(v1, dtype=float), (grid.n,)).copy()
    rule = rule or linear_rule(v0, v1)
    s = np.arange(m + 1) / m
    path = SteadyPath(v0, v1, rule, int(m), s)
    for sj in s:
        path.states.append(solve_steady(law, grid, mask, rule(sj)))
    return path


@dataclass
class PathModulus:
    s: np.ndarray
    increments: np.ndarray
    min_controls: np.ndarray
    min_controls_omega: np.ndarray

    @property
    def eta(self):
        """Smallest steady control along the path (over the whole domain)."""
        return float(self.min_controls.min())

    @property
    def eta_omega(self):
        """Smallest steady control restricted to the control region."""
        return float(self.min_controls_omega.min())

    @property
    def max_increment(self):
        return float(self.increments.max()) if self.increments.size else 0.0

    def rows(self):
        for j, s in enumerate(self.s):
            inc = self.increments[j] if j < self.increments.size else float("nan")
            yield {"j": j, "s": s, "min_control": self.min_controls[j],
                   "min_control_omega": self.min_controls_omega[j], "increment": inc}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# steady path modulus; increment = C2 proxy of gamma(s_{j+1}) - gamma(s_j)\n")
            writer = csv.writer(fh)
            writer.writerow(["s", "min_control", "increment"])
            for row in self.rows():
                writer.writerow([f"{row['s']:.17g}", f"{row['min_control']:.17g}", f"{row['increment']:.17g}"])


def path_modulus(path, grid, mask):
    """Per-segment increments in the discrete C2 proxy and the running control floor."""
    ys = path.ys
    incs = np.array([c2_proxy(ys[j + 1] - ys[j], grid) for j in range(path.m)])
    ctrl = path.controls
    sel = mask.support
    return PathModulus(path.s.copy(), incs, ctrl.min(axis=1), ctrl[:, sel].min(axis=1))
