"""Shared quadrature engine.

Panelized Gauss-Legendre with panel-doubling error control.  Integrals against
the dof-1 chi-square kernel substitute v = u**2, which removes the v**(-1/2)
endpoint singularity and leaves a smooth integrand in u: for any weight f,

    int_a^b f(v) g1(v; lam) dv
        = int_{sqrt(a)}^{sqrt(b)} f(u^2) [phi(u - s) + phi(u + s)] du,

with s = sqrt(lam).  The substituted rules are exposed as reusable node and
weight arrays so hot loops (calibration) can evaluate many noncentralities
against fixed weights with one broadcasted kernel.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@lru_cache(maxsize=None)
def gauss_legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def panel_nodes(a: float, b: float, panels: int, order: int):
    """Nodes and weights for panelized Gauss-Legendre on [a, b]."""
    x, w = gauss_legendre(order)
    edges = np.linspace(a, b, panels + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    halfw = 0.5 * (edges[1:] - edges[:-1])
    u = (mids[:, None] + halfw[:, None] * x[None, :]).ravel()
    wt = (halfw[:, None] * w[None, :]).ravel()
    return u, wt


def integrate(f, a: float, b: float, *, tol: float = 1e-12, order: int = 48,
              max_panels: int = 512):
    """Adaptive panel-doubling integral of f over [a, b].

    Doubles the panel count until successive estimates agree within tol
    (absolute) or 1e-13 relative, whichever is looser.
    """
    if not (b >= a):
        raise ValueError("integration bounds must satisfy a <= b")
    if b == a:
        return 0.0
    panels = 2
    u, w = panel_nodes(a, b, panels, order)
    prev = float(np.sum(w * f(u)))
    while panels < max_panels:
        panels *= 2
        u, w = panel_nodes(a, b, panels, order)
        cur = float(np.sum(w * f(u)))
        if abs(cur - prev) <= max(tol, 1e-13 * abs(cur)):
            return cur
        prev = cur
    return prev


def chi1_kernel(u, s):
    """phi(u - s) + phi(u + s); the substituted dof-1 chi-square kernel."""
    return (np.exp(-0.5 * (u - s) ** 2) + np.exp(-0.5 * (u + s) ** 2)) / _SQRT_2PI


def chi1_kernel_dlambda(u, s):
    """Substituted kernel for d/dlam integrals: u * (g3 - g1)(u^2; lam).

    Equals (u / (2 s)) [phi(u-s) - phi(u+s)] - (1/2) [phi(u-s) + phi(u+s)],
    with the s -> 0 limit taken by series.  Broadcasts over u and s.
    """
    u = np.asarray(u, dtype=float)
    s = np.asarray(s, dtype=float)
    pm = np.exp(-0.5 * (u - s) ** 2) / _SQRT_2PI
    pp = np.exp(-0.5 * (u + s) ** 2) / _SQRT_2PI
    small = s < 1e-4
    if not np.any(small):
        return (u / (2.0 * s)) * (pm - pp) - 0.5 * (pm + pp)
    s_safe = np.where(small, 1.0, s)
    normal = (u / (2.0 * s_safe)) * (pm - pp) - 0.5 * (pm + pp)
    u2 = u * u
    ug3 = u2 * np.exp(-0.5 * u2) / _SQRT_2PI * (1.0 + (u2 - 3.0) * s * s / 6.0)
    series = ug3 - 0.5 * (pm + pp)
    return np.where(small, series, normal)


class WeightedRule:
    """Fixed integration rule sum_k c_k * kernel(u_k; lam) for the dof-1 kernel.

    Holds substituted nodes u and combined weights c = w * f(u^2).  `values`
    and `dlambda_values` broadcast over an array of noncentralities, which is
    the workhorse of the calibration grid sweeps.
    """

    __slots__ = ("u", "c")

    def __init__(self, u: np.ndarray, c: np.ndarray):
        self.u = u
        self.c = c

    @classmethod
    def for_weight(cls, f, a: float, b: float, *, panels: int, order: int):
        """Rule for integral of f(v) g1(v; lam) dv over v in (a, b)."""
        u, w = panel_nodes(math.sqrt(a), math.sqrt(b), panels, order)
        return cls(u, w * f(u * u))

    @classmethod
    def concat(cls, rules):
        return cls(np.concatenate([r.u for r in rules]),
                   np.concatenate([r.c for r in rules]))

    def values(self, lams):
        """Integral values for each noncentrality in lams."""
        lams = np.asarray(lams, dtype=float)
        s = np.sqrt(np.atleast_1d(lams))[:, None]
        out = np.sum(self.c[None, :] * chi1_kernel(self.u[None, :], s), axis=1)
        return float(out[0]) if lams.ndim == 0 else out

    def value(self, lam: float) -> float:
        s = math.sqrt(lam)
        return float(np.sum(self.c * chi1_kernel(self.u, s)))

    def dlambda_values(self, lams):
        """d/dlam of the integral for each noncentrality in lams."""
        lams = np.asarray(lams, dtype=float)
        s = np.sqrt(np.atleast_1d(lams))[:, None]
        out = np.sum(self.c[None, :] * chi1_kernel_dlambda(self.u[None, :], s), axis=1)
        return float(out[0]) if lams.ndim == 0 else out
