"""Lower bounds for the minimal time of nonnegative controllability.

Two obstructions are turned into checkable certificates.

* If ``y0`` exceeds ``ybar0`` somewhere, every nonnegative control keeps the
  state above the free evolution ``z``; a nonnegative test function that
  still sees ``z - ybar > 0`` at time T excludes reaching ``ybar(T)``.
* If ``y0 < ybar0`` everywhere, a terminal datum that is positive on omega
  and negative elsewhere gives an adjoint that is nonnegative on omega for
  short times, so the duality pairing of any nonnegative control is
  nonnegative while the required pairing is negative.

Both checks include a margin ``term_tol * ||phi||`` so that a certified
horizon is also unreachable in the tolerance sense used by the controllers.
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import (ConstructionFailure, GeometryError, HypothesisViolation, IllConditioningError,
                     InvalidParameterError, LocalControlFailure, SolverDivergenceError)
from .fields import ControlSchedule
from .grid import inner, l1_norm, l2_norm, smoothstep
from .laws import kirchhoff_secant
from .local import HUM_EPS, TERMINAL_TOL, exact_control_to_trajectory
from .solvers import check_comparison, kirchhoff_steps, solve_adjoint_discrete, solve_forward, tridiagonal_solve
from .staircase import POSITIVITY_TOL

log = logging.getLogger(__name__)

MIN_STEPS = 50


# ---------------------------------------------------------------------------
# first eigenpair

@dataclass
class EigenPair:
    phi: np.ndarray
    lam: float
    lam_discrete: float
    lam_inverse_power: float
    phi_discrete: np.ndarray


def dirichlet_eigenfunction(grid, tol=1e-13, max_iter=500):
    """First Dirichlet eigenpair of ``-d2/dx2`` on (0, L).

    Returns the closed form ``sin(pi x / L)``, ``(pi/L)^2``, the closed-form
    eigenvalue of the three-point Laplacian and an inverse-power estimate of
    it.
    """
    h, n = grid.h, grid.n
    phi = np.sin(math.pi * grid.x / grid.L)
    lam_h = 2.0 / h**2 * (1.0 - math.cos(math.pi * h / grid.L))
    s = 1.0 / h**2
    lo, di, up = np.full(n - 1, -s), np.full(n, 2.0 * s), np.full(n - 1, -s)
    v = np.ones(n) / math.sqrt(n)
    mu = 0.0
    for _ in range(max_iter):
        w = tridiagonal_solve(lo, di, up, v)
        w /= np.linalg.norm(w)
        Aw = 2.0 * s * w
        Aw[1:] -= s * w[:-1]
        Aw[:-1] -= s * w[1:]
        mu_new = float(w @ Aw)
        done = abs(mu_new - mu) <= tol * mu_new
        v, mu = w, mu_new
        if done:
            break
    v = v * np.sign(v.sum()) / np.max(np.abs(v))
    return EigenPair(phi, (math.pi / grid.L) ** 2, lam_h, mu, v)


# ---------------------------------------------------------------------------
# Case 2 terminal datum

@dataclass
class TerminalDatum:
    phi1: np.ndarray
    zeta: np.ndarray
    phiT: np.ndarray
    delta: float
    d: float
    theta: float
    C_theta: float
    theta_tilde: float
    parts: dict
    halvings: int

    @property
    def total(self):
        return self.parts["outside"] + self.parts["band"] + self.parts["omega"]

    def margins(self):
        """Slack in each bound of the split (positive means the bound holds)."""
        th = self.theta
        return {
            "outside": -th - self.parts["outside"],
            "band": th / 3.0 - abs(self.parts["band"]),
            "omega": th / 3.0 - abs(self.parts["omega"]),
            "total": -th / 3.0 - self.total,
        }


def _distance_outside(x, omega):
    """Distance to the closed interval omega (zero inside)."""
    a, b = omega
    return np.maximum(np.maximum(a - x, x - b), 0.0)


def build_terminal_datum(grid, omega, y0, ybar0, delta=None, min_delta=None):
    """Cut-off terminal datum ``phiT = zeta * phi1`` for the case ``y0 < ybar0``.

    ``zeta`` is ``C_theta`` on omega, ``-1`` away from it and a quintic
    smoothstep across the band ``E_delta`` of width ``delta`` around omega.
    ``delta`` starts at ``d`` (half the distance from omega to the boundary)
    and is halved until the integral split holds.

    Raises
    ------
    HypothesisViolation
        ``y0 < ybar0`` fails at some node.
    GeometryError
        omega touches the boundary.
    ConstructionFailure
        No mass of ``ybar0 - y0`` away from omega (``theta <= 0``), or the
        band cannot be made thin enough.
    """
    diff = np.asarray(ybar0, dtype=float) - np.asarray(y0, dtype=float)
    if not np.all(diff > 0.0):
        raise HypothesisViolation("need y0 < ybar0 at every node; use the comparison certificate instead")
    a, b = map(float, omega)
    d = 0.5 * min(a, grid.L - b)
    if d <= 0.0:
        raise GeometryError("omega must stay away from the boundary")
    x, h = grid.x, grid.h
    phi1 = np.sin(math.pi * x / grid.L)
    inside = (x >= a) & (x <= b)
    dist = _distance_outside(x, omega)
    far = ~inside & (dist >= d)
    theta = h * float(np.sum(phi1[far] * diff[far]))
    if theta <= 0.0:
        raise ConstructionFailure(f"theta = {theta:.3e}: no mass of ybar0 - y0 away from omega")
    C = theta / (3.0 * 1.0 * l1_norm(diff, grid))
    delta = d if delta is None else float(delta)
    min_delta = h / 8.0 if min_delta is None else min_delta
    halvings = 0
    while True:
        band = ~inside & (dist < delta)
        zeta = np.full(grid.n, -1.0)
        zeta[inside] = C
        zeta[band] = -1.0 + (C + 1.0) * smoothstep(1.0 - dist[band] / delta)
        phiT = zeta * phi1
        g = diff * phiT
        parts = {
            "outside": h * float(g[~inside & ~band].sum()),
            "band": h * float(g[band].sum()),
            "omega": h * float(g[inside].sum()),
        }
        datum = TerminalDatum(phi1, zeta, phiT, delta, d, theta, C, C * float(phi1[inside].min()),
                              parts, halvings)
        if all(v >= 0.0 for v in datum.margins().values()):
            return datum
        delta *= 0.5
        halvings += 1
        if delta < min_delta:
            raise ConstructionFailure(f"split bounds still fail at delta={delta:.3e}: {datum.margins()}")


# ---------------------------------------------------------------------------
# duality identity

@dataclass
class DualityGap:
    gap: float
    lhs: float
    rhs: float
    adjoint: object

    @property
    def relative(self):
        return self.gap / (1.0 + abs(self.lhs))


def frozen_coefficient(law, z, xi):
    """``(Phi(z + xi) - Phi(z)) / xi``, the coefficient of the difference equation."""
    return kirchhoff_secant(law, z, xi)


def duality_gap(law, grid, mask, z, v, pT, y=None):
    """|<xi(T), pT> - sum_k dt <v_k rho, p_k>| for ``xi = y_v - z``.

    ``z`` is the free evolution and ``y`` the state driven by ``v`` from the
    same initial datum (solved here if not given). The adjoint is the exact
    transpose of the frozen-coefficient difference scheme.
    """
    if y is None:
        y = solve_forward(law, grid, z.initial, v, mask)
    xi = y.values - z.values
    coeff = frozen_coefficient(law, z.values, xi)
    steps = kirchhoff_steps(grid, coeff, z.dt)
    p = solve_adjoint_discrete(steps, pT, grid, z.times)
    lhs = inner(xi[-1], pT, grid)
    V = v.values if isinstance(v, ControlSchedule) else np.asarray(v)
    rhs = z.dt * sum(inner(V[k] * mask.rho, p.values[k], grid) for k in range(steps.K))
    return DualityGap(abs(lhs - rhs), lhs, rhs, p)


# ---------------------------------------------------------------------------
# certificate

@dataclass
class MinTimeCertificate:
    T0: float
    mode: str
    rows: List[dict]
    tol: float
    test_function: np.ndarray
    datum: Optional[TerminalDatum] = None

    def to_csv(self, path):
        keys = list(self.rows[0]) if self.rows else ["T"]
        with open(path, "w", newline="") as fh:
            fh.write(f"# mode={self.mode} T0={self.T0!r} tol={self.tol!r}\n")
            w = csv.writer(fh)
            w.writerow(keys)
            for r in self.rows:
                w.writerow([f"{r[k]:.17g}" if isinstance(r[k], float) else r[k] for k in keys])


def comparison_test_function(grid, y0, ybar0):
    """Smoothed indicator of ``{y0 > ybar0}`` times ``phi1``."""
    dev = np.maximum(np.asarray(y0, dtype=float) - np.asarray(ybar0, dtype=float), 0.0)
    top = dev.max()
    if top <= 0.0:
        raise HypothesisViolation("y0 never exceeds ybar0; use the cut-off datum instead")
    return smoothstep(dev / top) * np.sin(math.pi * grid.x / grid.L)


def time_ladder_geometric(T_max, m_steps):
    """``T_max * 2^-j`` for j = m_steps-1 .. 0, ascending."""
    return [T_max * 2.0 ** (-j) for j in range(m_steps - 1, -1, -1)]


def _ladder_dt(T, min_steps, dt_max=np.inf):
    return min(dt_max, T / min_steps)


def certify_mintime_lower(law, grid, mask, y0, target, T_max=1.0, m_steps=24, min_steps=MIN_STEPS,
                          tol=TERMINAL_TOL):
    """Largest ladder time below which reaching the target with ``v >= 0`` is excluded.

    The ladder is ``T_max * 2^-j``; each entry is run with ``min_steps``
    implicit steps. ``T0`` is the largest ladder time such that it and all
    smaller ladder times pass the obstruction check; ``T0 = 0`` means
    nothing was certified.
    """
    y0 = np.asarray(y0, dtype=float)
    ybar0 = target.ybar0
    dev = y0 - ybar0
    if np.max(np.abs(dev)) == 0.0:
        raise HypothesisViolation("y0 equals ybar0; there is nothing to obstruct")
    if np.any(dev > 0.0):
        mode, phi, datum = "Case1", comparison_test_function(grid, y0, ybar0), None
    else:
        datum = build_terminal_datum(grid, mask.omega, y0, ybar0)
        mode, phi = "Case2", datum.phiT
    margin = tol * l2_norm(phi, grid)
    rows, T0, broken = [], 0.0, False
    for T in time_ladder_geometric(T_max, m_steps):
        dt = _ladder_dt(T, min_steps)
        tgt = target.resample(dt, T)
        z = solve_forward(law, grid, y0, None, mask, dt=dt, T=T)
        row = {"T": float(T), "dt": float(dt)}
        if mode == "Case1":
            F = np.array([inner(zk - yk, phi, grid) for zk, yk in zip(z.values, tgt.trajectory.values)])
            row.update(functional=float(F[-1]), worst=float(F.min()), margin=margin)
            ok = bool(F.min() > margin)
        else:
            xibar = tgt.trajectory.values - z.values
            G = inner(xibar[-1], phi, grid)
            coeff = frozen_coefficient(law, z.values, xibar)
            p = solve_adjoint_discrete(kirchhoff_steps(grid, coeff, dt), phi, grid, z.times)
            pmin = float(p.values[:-1][:, mask.support].min())
            row.update(functional=float(G), adjoint_min_omega=pmin, floor=0.5 * datum.theta_tilde,
                       margin=margin)
            ok = bool(G < -margin and pmin >= 0.5 * datum.theta_tilde)
        row["certified"] = ok
        rows.append(row)
        if ok and not broken:
            T0 = T
        else:
            broken = True
    log.info("min-time certificate (%s): T0=%g", mode, T0)
    return MinTimeCertificate(T0, mode, rows, tol, phi, datum)


# ---------------------------------------------------------------------------
# empirical search

@dataclass
class AchievabilityTable:
    rows: List[dict]
    T0: float
    certificate: Optional[MinTimeCertificate] = None
    comparisons: List[object] = field(default_factory=list)

    @property
    def smallest_achieved(self):
        ts = [r["T"] for r in self.rows if r["verdict"] == "achieved-nonneg"]
        return min(ts) if ts else float("inf")

    @property
    def bracket(self):
        return (self.T0, self.smallest_achieved)

    @property
    def consistent(self):
        return self.T0 <= self.smallest_achieved and all(bool(c) for c in self.comparisons)

    def to_csv(self, path):
        keys = ["T", "tau", "dt", "verdict", "terminal_error", "min_control", "comparison_ok"]
        with open(path, "w", newline="") as fh:
            fh.write(f"# T0={self.T0!r} smallest_achieved_nonneg={self.smallest_achieved!r}\n")
            w = csv.writer(fh)
            w.writerow(keys)
            for r in self.rows:
                w.writerow([f"{r.get(k):.17g}" if isinstance(r.get(k), float) else r.get(k, "")
                            for k in keys])


def search_constrained_time(law, grid, mask, y0, target, T_ladder, eps=HUM_EPS, pos_tol=POSITIVITY_TOL,
                            tau=0.5, term_tol=TERMINAL_TOL, min_steps=MIN_STEPS, dt_max=0.01,
                            certificate=None):
    """Try to reach ``target(T)`` for every T on the ladder.

    Each attempt follows ``vbar`` until ``T - tau_T`` with ``tau_T = min(tau, T/2)``
    and then applies the local controller, without any horizon doubling.
    Every nonnegative schedule produced is checked against the free
    evolution with :func:`check_comparison`.
    """
    T_ladder = [float(T) for T in T_ladder]
    if any(b <= a for a, b in zip(T_ladder, T_ladder[1:])):
        raise InvalidParameterError("T ladder must be strictly increasing")
    y0 = np.asarray(y0, dtype=float)
    rows, comparisons = [], []
    for T in T_ladder:
        dt = _ladder_dt(T, min_steps, dt_max)
        tgt = target.resample(dt, T)
        K = tgt.trajectory.steps
        k1 = K - max(1, min(int(round(tau / dt)), K // 2))
        row = {"T": T, "tau": float(tgt.trajectory.times[K] - tgt.trajectory.times[k1]), "dt": float(dt)}
        try:
            if k1 > 0:
                head = tgt.control.window(0, k1)
                y_mid = solve_forward(law, grid, y0, head, mask).final
            else:
                y_mid = y0
            ybar_w, vbar_w = tgt.window(k1, K)
            loc = exact_control_to_trajectory(law, grid, mask, y_mid, ybar_w, vbar_w, eps=eps,
                                              delta_target=np.inf)
        except (LocalControlFailure, IllConditioningError, SolverDivergenceError) as exc:
            row.update(verdict="failed", terminal_error=float("nan"), min_control=float("nan"),
                       comparison_ok="", reason=str(exc))
            rows.append(row)
            continue
        vals = np.vstack([tgt.control.values[:k1], loc.control.values])
        v = ControlSchedule(tgt.control.times.copy(), vals, grid)
        y = solve_forward(law, grid, y0, v, mask)
        err = l2_norm(y.final - tgt.trajectory.final, grid)
        vmin = v.min_value
        row.update(terminal_error=float(err), min_control=float(vmin))
        if err > term_tol or not np.isfinite(err):
            row["verdict"] = "failed"
        elif vmin >= -pos_tol:
            row["verdict"] = "achieved-nonneg"
        else:
            row["verdict"] = "achieved-with-negativity"
        if vmin >= -pos_tol:
            z = solve_forward(law, grid, y0, None, mask, dt=dt, T=T)
            rep = check_comparison(y, z)
            comparisons.append(rep)
            row["comparison_ok"] = bool(rep)
        else:
            row["comparison_ok"] = ""
        rows.append(row)
        log.info("T=%g: %s (err %.3e, min v %.3e)", T, row["verdict"], err, vmin)
    T0 = certificate.T0 if certificate is not None else 0.0
    return AchievabilityTable(rows, T0, certificate, comparisons)
