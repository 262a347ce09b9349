"""Independent reference computations used to derive and freeze test values.

Nothing here imports the library's solvers: each oracle works from the
untransformed equation, dense linear algebra or scipy quadrature.
"""
import math

import numpy as np
from scipy import integrate, linalg


def heat_mode(x, t, L=1.0, k=1):
    """Exact solution of y_t = y_xx with y0 = sin(k pi x / L)."""
    return np.exp(-(k * math.pi / L) ** 2 * t) * np.sin(k * math.pi * x / L)


def primitive_by_quadrature(a, r):
    """Phi(r) = int_0^r a(s) ds by adaptive quadrature."""
    return integrate.quad(a, 0.0, r, epsabs=1e-14, epsrel=1e-13)[0]


def face_secant(a, yl, yr):
    """Mean of a over [yl, yr] (a(yl) when equal), by quadrature."""
    if abs(yr - yl) < 1e-14:
        return a(yl)
    return primitive_by_quadrature(a, yr) - primitive_by_quadrature(a, yl)


def steady_picard(a, x, h, source, damping=0.5, tol=1e-13, max_iter=2000):
    """Damped Picard iteration for -(a(y) y')' = source on the untransformed equation.

    Face coefficients are secant means of ``a`` between neighbouring nodes;
    each sweep solves a dense symmetric system with the frozen faces.
    """
    n = x.size
    y = np.zeros(n)
    for _ in range(max_iter):
        yp = np.concatenate([[0.0], y, [0.0]])
        A = np.empty(n + 1)
        for i in range(n + 1):
            d = yp[i + 1] - yp[i]
            A[i] = face_secant(a, yp[i], yp[i + 1]) / d if abs(d) >= 1e-14 else a(yp[i])
        K = np.diag(A[:-1] + A[1:]) - np.diag(A[1:-1], 1) - np.diag(A[1:-1], -1)
        y_new = np.linalg.solve(K / h**2, source)
        y_next = (1 - damping) * y + damping * y_new
        if np.max(np.abs(y_next - y)) <= tol:
            return y_next
        y = y_next
    return y


def dense_heat_steps(n, h, dt, K, coeff=None):
    """Dense implicit-Euler matrices I - dt*Lap_h(c .) for K steps."""
    Lap = (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)) / h**2
    mats = []
    for k in range(K):
        c = np.ones(n) if coeff is None else coeff[k + 1]
        mats.append(np.eye(n) - dt * Lap @ np.diag(c))
    return mats


def dense_duality(mats, z0, forcing, pT, dt, h):
    """Forward/backward sweep with dense solves; returns (<z_K,pT> - <z0,p0>, sum dt <f_k,p_k>)."""
    z = [np.asarray(z0, dtype=float)]
    for k, M in enumerate(mats):
        z.append(linalg.solve(M, z[-1] + dt * forcing[k]))
    p = [None] * (len(mats) + 1)
    p[-1] = np.asarray(pT, dtype=float)
    for k in range(len(mats) - 1, -1, -1):
        p[k] = linalg.solve(mats[k].T, p[k + 1])
    lhs = h * (z[-1] @ p[-1]) - h * (z[0] @ p[0])
    rhs = dt * sum(h * (forcing[k] @ p[k]) for k in range(len(mats)))
    return lhs, rhs


def smoothstep5(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def quad_theta(diff, omega, L=1.0):
    """theta and ||diff||_L1 by quadrature for the cut-off datum construction."""
    a, b = omega
    d = 0.5 * min(a, L - b)
    f = lambda s: math.sin(math.pi * s / L) * diff(s)
    theta = integrate.quad(f, 0.0, a - d, epsabs=1e-14)[0] + integrate.quad(f, b + d, L, epsabs=1e-14)[0]
    l1 = integrate.quad(lambda s: abs(diff(s)), 0.0, L, epsabs=1e-14)[0]
    return theta, l1, d


def fitted_rate(t, e):
    """Least-squares slope of -log e over the second half of the samples."""
    t = np.asarray(t)
    e = np.asarray(e)
    sel = t >= t[0] + 0.5 * (t[-1] - t[0])
    return -np.polyfit(t[sel], np.log(e[sel]), 1)[0]
