"""Diffusion laws a(r), their Kirchhoff primitives and a small registry.

Every law satisfies ``a(r) >= a0 > 0`` and ``|a'(r)| <= M``. The Kirchhoff
primitive ``Phi(r) = int_0^r a(s) ds`` turns ``(a(y) y_x)_x`` into
``Phi(y)_xx``, which is how all the solvers in this package discretize the
quasilinear term.
"""
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import InvalidParameterError

# 10-point Gauss-Legendre rule mapped to [0, 1], used for secant means.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS

# Secant means switch from quadrature to plain differences above this spread.
_SECANT_SWITCH = 1.0


@dataclass(frozen=True)
class DiffusionLaw:
    name: str
    a: Callable
    da: Callable
    a0: float
    M: float
    phi: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __call__(self, r):
        return self.a(np.asarray(r, dtype=float))

    def derivative(self, r):
        return self.da(np.asarray(r, dtype=float))

    @property
    def spec(self):
        """Registry string that reproduces this law."""
        if self.name == "constant":
            return f"constant({self.params['c']!r})"
        return self.name


def _check_finite(r):
    r = np.asarray(r, dtype=float)
    if np.isnan(r).any():
        raise InvalidParameterError("NaN passed to a Kirchhoff transform")
    return r


def kirchhoff(law, r):
    """Phi(r) = int_0^r a(s) ds, closed form when the law provides one."""
    r = _check_finite(r)
    if law.phi is not None:
        return law.phi(r)
    flat = r.ravel()
    out = np.array([
        integrate.quad(law.a, 0.0, v, epsabs=1e-13, epsrel=1e-13, limit=200)[0] for v in flat
    ])
    return out.reshape(r.shape) if r.ndim else float(out[0])


def kirchhoff_inverse(law, w, tol=1e-15, max_iter=100):
    """Invert Phi by Newton's method kept inside a shrinking bracket.

    Since Phi' = a >= a0, the root of Phi(r) = w lies between 0 and w/a0.
    """
    w = _check_finite(w)
    scalar = w.ndim == 0
    w = np.atleast_1d(w).astype(float)
    lo = np.minimum(0.0, w / law.a0)
    hi = np.maximum(0.0, w / law.a0)
    r = np.clip(w / law(np.zeros_like(w)), lo, hi)
    for _ in range(max_iter):
        f = kirchhoff(law, r) - w
        done = np.abs(f) <= tol * (1.0 + np.abs(w))
        if done.all():
            break
        lo = np.where(f < 0.0, r, lo)
        hi = np.where(f > 0.0, r, hi)
        step = r - f / law(r)
        outside = (step <= lo) | (step >= hi)
        step = np.where(outside, 0.5 * (lo + hi), step)
        r = np.where(done, r, step)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * (1.0 + np.abs(r))):
            break
    return float(r[0]) if scalar else r


def secant_mean(fn, base, incr):
    """Mean of ``fn`` over [base, base + incr], i.e. int_0^1 fn(base + s*incr) ds.

    Quadrature for small spreads avoids the cancellation of the difference
    quotient; large spreads use the exact difference of the primitive when
    the caller supplies it (see :func:`kirchhoff_secant`).
    """
    base = np.asarray(base, dtype=float)
    incr = np.asarray(incr, dtype=float)
    pts = base[..., None] + incr[..., None] * _GL_NODES
    return np.sum(fn(pts) * _GL_WEIGHTS, axis=-1)


def kirchhoff_secant(law, base, incr):
    """(Phi(base + incr) - Phi(base)) / incr, with limit a(base) at incr = 0."""
    base, incr = np.broadcast_arrays(np.asarray(base, dtype=float), np.asarray(incr, dtype=float))
    shape = base.shape
    base, incr = base.ravel(), incr.ravel()
    out = secant_mean(law.a, base, incr)
    big = np.abs(incr) >= _SECANT_SWITCH
    if big.any():
        b, i = base[big], incr[big]
        out[big] = (kirchhoff(law, b + i) - kirchhoff(law, b)) / i
    return out.reshape(shape)


def derivative_secant(law, base, incr, cutoff=1e-12):
    """(a(base + incr) - a(base)) / incr, with limit a'(base) when |incr| < cutoff."""
    base, incr = np.broadcast_arrays(np.asarray(base, dtype=float), np.asarray(incr, dtype=float))
    shape = base.shape
    base, incr = base.ravel(), incr.ravel()
    out = secant_mean(law.da, base, incr)
    small = np.abs(incr) < cutoff
    out[small] = law.derivative(base[small])
    big = np.abs(incr) >= _SECANT_SWITCH
    if big.any():
        b, i = base[big], incr[big]
        out[big] = (law(b + i) - law(b)) / i
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# registry

def constant_law(c=1.0):
    c = float(c)
    if c <= 0:
        raise InvalidParameterError(f"constant diffusion must be positive, got {c}")
    return DiffusionLaw(
        "constant",
        a=lambda r: np.full_like(np.asarray(r, dtype=float), c),
        da=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        a0=c,
        M=0.0,
        phi=lambda r: c * np.asarray(r, dtype=float),
        params={"c": c},
    )


def two_plus_sine():
    return DiffusionLaw(
        "two-plus-sine",
        a=lambda r: 2.0 + np.sin(r),
        da=np.cos,
        a0=1.0,
        M=1.0,
        phi=lambda r: 2.0 * r + 1.0 - np.cos(r),
    )


def rational_bump():
    return DiffusionLaw(
        "rational-bump",
        a=lambda r: 1.0 + 1.0 / (1.0 + r * r),
        da=lambda r: -2.0 * r / (1.0 + r * r) ** 2,
        a0=1.0,
        M=2.0,
        phi=lambda r: r + np.arctan(r),
    )


def custom_law(a, da, a0, M, name="custom"):
    """Law without a closed-form primitive; Phi falls back to adaptive quadrature."""
    return DiffusionLaw(name, a=a, da=da, a0=float(a0), M=float(M))


_CONSTANT_RE = re.compile(r"^constant\(\s*([-+0-9.eE]+)\s*\)$")


def get_law(spec):
    """Look up a builtin law: ``"constant(c)"``, ``"two-plus-sine"`` or ``"rational-bump"``."""
    if isinstance(spec, DiffusionLaw):
        return spec
    spec = spec.strip()
    m = _CONSTANT_RE.match(spec)
    if m:
        return constant_law(float(m.group(1)))
    if spec == "constant":
        return constant_law(1.0)
    if spec == "two-plus-sine":
        return two_plus_sine()
    if spec == "rational-bump":
        return rational_bump()
    raise InvalidParameterError(f"unknown diffusion law {spec!r}")
