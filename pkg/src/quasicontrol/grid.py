"""Uniform 1D grids, control masks and the discrete norms used everywhere.

Fields live on the ``n`` interior nodes ``x_i = i*h``; the two boundary
values are implicitly zero (homogeneous Dirichlet).
"""
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, InvalidParameterError, ResolutionError


@dataclass(frozen=True)
class Grid:
    L: float
    n: int

    @property
    def h(self):
        return self.L / (self.n + 1)

    @property
    def x(self):
        return self.h * np.arange(1, self.n + 1)

    @property
    def x_full(self):
        """Nodes including both boundary points."""
        return self.h * np.arange(0, self.n + 2)

    def pad(self, field):
        """Append the zero boundary values to an interior field."""
        field = np.asarray(field, dtype=float)
        return np.concatenate(([0.0], field, [0.0]))

    def metadata(self):
        return {"L": self.L, "n": self.n, "h": self.h}


def build_grid(L, n):
    """Uniform grid on (0, L) with ``n`` interior nodes."""
    if not np.isfinite(L) or L <= 0:
        raise InvalidParameterError(f"domain length must be positive, got {L!r}")
    if int(n) != n or n < 3:
        raise InvalidParameterError(f"need at least 3 interior nodes, got {n!r}")
    return Grid(float(L), int(n))


def smoothstep(t):
    """Quintic smoothstep 6t^5 - 15t^4 + 10t^3, clipped to [0, 1]."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


@dataclass(frozen=True)
class ControlMask:
    rho: np.ndarray
    omega: tuple
    omega1: tuple

    @property
    def support(self):
        """Boolean selector of the nodes where the control acts (rho > 0)."""
        return self.rho > 0.0

    @property
    def plateau(self):
        """Boolean selector of the nodes where rho == 1."""
        return self.rho == 1.0

    def in_omega(self, x):
        a, b = self.omega
        return (x > a) & (x < b)

    def in_omega1(self, x):
        c, d = self.omega1
        return (x > c) & (x < d)


def mask_profile(x, omega, omega1):
    """Evaluate the smooth cut-off at arbitrary points ``x``."""
    x = np.asarray(x, dtype=float)
    a, b = omega
    c, d = omega1
    rho = np.zeros_like(x)
    rho[(x >= c) & (x <= d)] = 1.0
    left = (x > a) & (x < c)
    right = (x > d) & (x < b)
    rho[left] = smoothstep((x[left] - a) / (c - a))
    rho[right] = smoothstep((b - x[right]) / (b - d))
    return rho


def build_control_mask(grid, omega, omega1):
    """Smooth control profile: 1 on ``omega1``, 0 outside ``omega``.

    Raises
    ------
    GeometryError
        If ``closure(omega1)`` is not strictly inside ``omega`` or ``omega``
        is not inside (0, L).
    ResolutionError
        If either transition band holds fewer than two grid nodes.
    """
    a, b = map(float, omega)
    c, d = map(float, omega1)
    if not (0.0 <= a < c < d < b <= grid.L):
        raise GeometryError(f"need 0 <= {a} < {c} < {d} < {b} <= {grid.L} for nested control sets")
    x = grid.x
    for lo, hi in ((a, c), (d, b)):
        inside = np.count_nonzero((x > lo) & (x < hi))
        if inside < 2:
            raise ResolutionError(
                f"transition band ({lo}, {hi}) holds {inside} grid nodes, need at least 2"
            )
    rho = mask_profile(x, (a, b), (c, d))
    return ControlMask(rho, (a, b), (c, d))


def full_mask(grid):
    """Debug mask with rho == 1 on the whole domain."""
    return ControlMask(np.ones(grid.n), (0.0, grid.L), (0.0, grid.L))


# ---------------------------------------------------------------------------
# discrete inner products and norms

def inner(a, b, grid):
    return grid.h * float(np.dot(a, b))


def l2_norm(field, grid):
    return float(np.sqrt(grid.h * np.dot(field, field)))


def l1_norm(field, grid):
    return grid.h * float(np.sum(np.abs(field)))


def sup_norm(field):
    field = np.asarray(field)
    return float(np.max(np.abs(field))) if field.size else 0.0


def gradient(field, grid):
    """Derivative at every node including the boundary.

    Centered differences in the interior, second order one-sided stencils at
    x = 0 and x = L (exact for quadratics).
    """
    y = grid.pad(field)
    h = grid.h
    g = np.empty_like(y)
    g[1:-1] = (y[2:] - y[:-2]) / (2.0 * h)
    g[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h)
    g[-1] = (3.0 * y[-1] - 4.0 * y[-2] + y[-3]) / (2.0 * h)
    return g


def c2_proxy(field, grid):
    """Discrete stand-in for a C^{2+theta} norm.

    Maximum of the sup norms of the field, its first divided difference and
    its second divided difference (zero boundary values included).
    """
    y = grid.pad(field)
    h = grid.h
    d1 = np.diff(y) / h
    d2 = (y[2:] - 2.0 * y[1:-1] + y[:-2]) / h**2
    return max(sup_norm(y), sup_norm(d1), sup_norm(d2))
