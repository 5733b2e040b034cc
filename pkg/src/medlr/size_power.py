"""Null rejection probabilities, power, and discrepancy functions.

The null rejection probability (NRP) of a test is its rejection probability
as a function of the nuisance noncentrality lam when one of the two
noncentralities vanishes.  For the LR test it is alpha [1 - G(chi2; lam)],
which sags as low as alpha^2 near the origin; the augmented tests add area
below the LR boundary to pull the NRP back up to alpha.

The discrepancy of the simply augmented test with ratio threshold b is

    D(alpha, b, lam) = NRP(lam) - alpha
        = int_0^chi2 [G(v/b) - G(bv) - alpha] g(v; lam) dv
          + int_chi2^{chi2/b} [(1 - alpha) - G(bv)] g(v; lam) dv,

and its lam-derivative follows by differentiating the kernel:
d g(v; lam)/d lam = [g3(v; lam) - g(v; lam)] / 2.  The truncated variant
restricts the augmentation to v2 < chi2, with weight functions
G(v/b) - G(bv) - alpha on (0, b chi2) and 1 - 2 alpha - G(bv) on
(b chi2, chi2).  Calibration runs entirely on these forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad as _scipy_quad

from ._quad import WeightedRule, chi1_kernel, integrate
from .distributions import (
    chisq1_quantile,
    log_nc_chisq1_cdf,
    nc_chisq1_cdf,
    nc_chisq_pdf,
    norm_pdf,
)
from .order_stats import NoncentralityPair
from .rules import ExactTestSpec, build_exact_spec

__all__ = [
    "nrp_lr",
    "power_lr",
    "a_integral",
    "nrp_simply_augmented",
    "discrepancy",
    "discrepancy_dlambda",
    "truncated_discrepancy",
    "truncated_discrepancy_dlambda",
    "power_simply_augmented",
    "power_truncated",
    "power_exact",
    "exact_nrp_quadrature",
    "nrp_wald",
    "power_wald",
    "power_region",
    "rectangle_excess",
    "rectangle_positive_crossing",
    "BoundParams",
    "TRUNCATED_BOUND_PARAMS",
    "truncated_bound_ub",
    "bound_c1",
    "c1_negative_crossing",
    "ub_negative_crossing",
    "DiscrepancyCurve",
    "sample_discrepancy_curve",
    "write_curve_csv",
]

_ORDER = 40
_PANELS = 5


def _chi2(alpha: float) -> float:
    return chisq1_quantile(1.0 - alpha)


def _unpack(nc) -> tuple[float, float]:
    if isinstance(nc, NoncentralityPair):
        return nc.lambda1, nc.lambda2
    l1, l2 = nc
    return float(l1), float(l2)


def _check_level(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError("level must lie in (0, 1)")


def nrp_lr(alpha: float, lam: float) -> float:
    """NRP of the LR test: alpha [1 - G(chi2; lam)]; lies in [alpha^2, alpha]."""
    _check_level(alpha)
    return alpha * (1.0 - nc_chisq1_cdf(_chi2(alpha), lam))


def power_lr(alpha: float, nc) -> float:
    """Power of the LR test: product of the two marginal tail probabilities."""
    _check_level(alpha)
    l1, l2 = _unpack(nc)
    z = _chi2(alpha)
    return (1.0 - nc_chisq1_cdf(z, l1)) * (1.0 - nc_chisq1_cdf(z, l2))


# -- simply augmented ---------------------------------------------------------


def augmented_rule(alpha: float, b: float, *, order: int = _ORDER,
                   panels: int = _PANELS) -> WeightedRule:
    """Quadrature rule whose value at lam is the discrepancy D(alpha, b, lam)."""
    _check_level(alpha)
    if not 0.0 < b <= 1.0:
        raise ValueError("ratio threshold must lie in (0, 1]")
    z = _chi2(alpha)
    r1 = WeightedRule.for_weight(
        lambda v: nc_chisq1_cdf(v / b) - nc_chisq1_cdf(b * v) - alpha,
        0.0, z, panels=panels, order=order)
    if b == 1.0:
        return r1
    r2 = WeightedRule.for_weight(
        lambda v: (1.0 - alpha) - nc_chisq1_cdf(b * v),
        z, z / b, panels=panels, order=order)
    return WeightedRule.concat([r1, r2])


def truncated_rule(alpha: float, b: float, *, order: int = _ORDER,
                   panels: int = _PANELS) -> WeightedRule:
    """Rule whose value at lam is the truncated discrepancy."""
    _check_level(alpha)
    if not 0.0 <= b <= 1.0:
        raise ValueError("ratio threshold must lie in [0, 1]")
    z = _chi2(alpha)
    rules = []
    if b > 0.0:
        rules.append(WeightedRule.for_weight(
            lambda v: nc_chisq1_cdf(v / b) - nc_chisq1_cdf(b * v) - alpha,
            0.0, b * z, panels=panels, order=order))
    if b < 1.0:
        rules.append(WeightedRule.for_weight(
            lambda v: 1.0 - 2.0 * alpha - nc_chisq1_cdf(b * v),
            b * z, z, panels=panels, order=order))
    return WeightedRule.concat(rules) if len(rules) > 1 else rules[0]


def discrepancy(alpha: float, b: float, lam) -> float:
    """NRP of the simply augmented test minus alpha."""
    return augmented_rule(alpha, b).values(lam)


def discrepancy_dlambda(alpha: float, b: float, lam) -> float:
    """lam-derivative of the discrepancy."""
    return augmented_rule(alpha, b).dlambda_values(lam)


def truncated_discrepancy(alpha: float, b: float, lam) -> float:
    """NRP of the truncated augmented test minus alpha."""
    return truncated_rule(alpha, b).values(lam)


def truncated_discrepancy_dlambda(alpha: float, b: float, lam) -> float:
    return truncated_rule(alpha, b).dlambda_values(lam)


def a_integral(alpha: float, b: float, lam: float) -> float:
    """int_0^chi2 [g(v; lam) G(v/b) + g(v) G(v/b; lam)] dv.

    Stays as an independent route to the augmented NRP; the identity
    nrp = alpha + A - G(chi2; lam) is asserted in the test suite against the
    discrepancy form.
    """
    _check_level(alpha)
    if b <= 0.0:
        raise ValueError("ratio threshold must be > 0")
    z = _chi2(alpha)
    s = math.sqrt(lam)

    def f(u):
        v = u * u
        return (chi1_kernel(u, s) * nc_chisq1_cdf(v / b)
                + chi1_kernel(u, 0.0) * nc_chisq1_cdf(v / b, lam))

    return integrate(f, 0.0, math.sqrt(z), tol=1e-13)


def nrp_simply_augmented(alpha: float, b: float, lam) -> float:
    """NRP of the simply augmented test: alpha + D(alpha, b, lam)."""
    return alpha + discrepancy(alpha, b, lam)


def power_simply_augmented(alpha: float, b: float, nc) -> float:
    """Power of the simply augmented test under (lam1, lam2).

    LR power, minus the content of the both-below square, plus the integral
    of g(v; lam1) G(v/b; lam2) + g(v; lam2) G(v/b; lam1) over (0, chi2).
    """
    _check_level(alpha)
    if not 0.0 < b <= 1.0:
        raise ValueError("ratio threshold must lie in (0, 1]")
    l1, l2 = _unpack(nc)
    z = _chi2(alpha)
    s1, s2 = math.sqrt(l1), math.sqrt(l2)

    def f(u):
        v = u * u
        return (chi1_kernel(u, s1) * nc_chisq1_cdf(v / b, l2)
                + chi1_kernel(u, s2) * nc_chisq1_cdf(v / b, l1))

    aug = integrate(f, 0.0, math.sqrt(z), tol=1e-13)
    return (power_lr(alpha, nc)
            - nc_chisq1_cdf(z, l1) * nc_chisq1_cdf(z, l2)
            + aug)


def power_truncated(alpha: float, b: float, nc) -> float:
    """Power of the truncated augmented test under (lam1, lam2)."""
    _check_level(alpha)
    if not 0.0 <= b <= 1.0:
        raise ValueError("ratio threshold must lie in [0, 1]")
    l1, l2 = _unpack(nc)
    z = _chi2(alpha)
    s1, s2 = math.sqrt(l1), math.sqrt(l2)

    def f(u):
        v = u * u
        t1 = chi1_kernel(u, s2) * (nc_chisq1_cdf(v, l1) - nc_chisq1_cdf(b * v, l1))
        t2 = chi1_kernel(u, s1) * (nc_chisq1_cdf(v, l2) - nc_chisq1_cdf(b * v, l2))
        return t1 + t2

    return power_lr(alpha, nc) + integrate(f, 0.0, math.sqrt(z), tol=1e-13)


# -- exact test ---------------------------------------------------------------


def power_exact(spec: ExactTestSpec, nc) -> float:
    """Power of the exact test by the knot sum formula."""
    l1, l2 = _unpack(nc)
    z = spec.knots[-1]
    G = nc_chisq1_cdf
    gain = G(z, l1) * G(z, l2)
    knots = (0.0,) + spec.knots
    for i in range(1, len(knots) - 1):
        zi, zi1 = knots[i], knots[i + 1]
        gain -= G(zi, l1) * (G(zi1, l2) - G(zi, l2))
        gain -= G(zi, l2) * (G(zi1, l1) - G(zi, l1))
    return power_lr(spec.alpha, nc) + gain


def exact_nrp_quadrature(spec: ExactTestSpec, lam: float) -> float:
    """Null rejection probability of the exact test by triangle quadrature.

    Integrates the null joint density over each diagonal triangle between
    consecutive knots; independent of the similarity identity it verifies.
    """
    alpha = spec.alpha
    s = math.sqrt(lam)
    total = nrp_lr(alpha, lam)
    knots = (0.0,) + spec.knots
    for i in range(len(knots) - 1):
        zi, zi1 = knots[i], knots[i + 1]
        gzi_c = nc_chisq1_cdf(zi)
        gzi_n = nc_chisq1_cdf(zi, lam)

        def f(u):
            v = u * u
            return (chi1_kernel(u, s) * (nc_chisq1_cdf(v) - gzi_c)
                    + chi1_kernel(u, 0.0) * (nc_chisq1_cdf(v, lam) - gzi_n))

        total += integrate(f, math.sqrt(zi), math.sqrt(zi1), tol=1e-13)
    return total


# -- Wald ---------------------------------------------------------------------


def _wald_tail_integral(alpha: float, l1: float, l2: float) -> float:
    """Probability of {v1 v2 / (v1 + v2) > chi2} under (l1, l2).

    The region is v1 > c with v2 above c v1 / (v1 - c); for v1 > 2c that
    curve falls below the diagonal and the lower limit is v1 itself.
    """
    c = _chi2(alpha)
    g, G = nc_chisq_pdf, nc_chisq1_cdf

    def f(v1):
        lo = max(v1, c * v1 / (v1 - c)) if v1 > c else np.inf
        return (g(v1, l1) * (1.0 - G(lo, l2))
                + g(v1, l2) * (1.0 - G(lo, l1)))

    i1 = _scipy_quad(f, c, 2 * c, epsabs=1e-13, limit=200)[0]
    i2 = _scipy_quad(f, 2 * c, np.inf, epsabs=1e-13, limit=200)[0]
    return i1 + i2


def nrp_wald(alpha: float, lam: float) -> float:
    """NRP of the Wald (Sobel) test using the chi-square critical value."""
    _check_level(alpha)
    return _wald_tail_integral(alpha, 0.0, lam)


def power_wald(alpha: float, nc) -> float:
    _check_level(alpha)
    l1, l2 = _unpack(nc)
    return _wald_tail_integral(alpha, l1, l2)


def power_region(region: str, params: dict, nc) -> float:
    """Dispatch power (or NRP via a null pair) to the named critical region."""
    if region == "lr":
        return power_lr(params["alpha"], nc)
    if region == "wald":
        return power_wald(params["alpha"], nc)
    if region == "simply_augmented":
        return power_simply_augmented(params["alpha"], params["b"], nc)
    if region == "truncated":
        return power_truncated(params["alpha"], params["b"], nc)
    if region == "exact":
        spec = params.get("spec")
        if spec is None:
            spec = build_exact_spec(params["r"])
        return power_exact(spec, nc)
    raise ValueError(f"unknown region {region!r}")


# -- rectangle augmentation (no fixed block can be size-correct) --------------


def rectangle_excess(alpha: float, epsilon: float, lam) -> float:
    """NRP excess over alpha when the LR region gains the standard rectangle.

    The rectangle spans chi2(alpha + eps) < v1 < chi2(alpha) in v1 and
    chi2(alpha) < v2 < chi2(alpha - eps); its null content is
    eps [G(z2; lam) - G(z1; lam)], so the excess is that minus
    alpha G(chi2; lam).  Positive for some finite lam whenever eps > 0.
    """
    if not 0.0 < epsilon <= alpha <= 0.5:
        raise ValueError("need 0 < epsilon <= alpha <= 1/2")
    z1 = chisq1_quantile(1.0 - alpha - epsilon)
    z2 = chisq1_quantile(1.0 - alpha + epsilon)
    zc = _chi2(alpha)
    return (-alpha * nc_chisq1_cdf(zc, lam)
            + epsilon * (nc_chisq1_cdf(z2, lam) - nc_chisq1_cdf(z1, lam)))


def rectangle_positive_crossing(alpha: float, epsilon: float, *,
                                lam_max: float = 500.0, step: float = 0.5,
                                tol: float = 1e-6) -> Optional[float]:
    """Smallest lam in [0, lam_max] where the rectangle excess turns positive."""
    grid = np.arange(0.0, lam_max + step, step)
    vals = np.array([rectangle_excess(alpha, epsilon, l) for l in grid])
    idx = np.nonzero(vals > 0)[0]
    if len(idx) == 0:
        return None
    i = idx[0]
    if i == 0:
        return 0.0
    lo, hi = grid[i - 1], grid[i]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if rectangle_excess(alpha, epsilon, mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# -- upper bound for the truncated discrepancy tail ---------------------------


@dataclass(frozen=True)
class BoundParams:
    """Linear majorant gamma0 + gamma1 sqrt(v) of the truncated weights,
    with the lam value past which the induced bound stays negative."""

    gamma0: float
    gamma1: float
    lambda0: float
    b_star: float
    lambda_star: float

    def __post_init__(self):
        if self.gamma0 <= 0 or self.gamma1 >= 0:
            raise ValueError("need gamma0 > 0 and gamma1 < 0")


TRUNCATED_BOUND_PARAMS = {
    0.01: BoundParams(0.01587, -0.00917, 22.252, 0.969651, 0.698449),
    0.05: BoundParams(0.07823, -0.04917, 33.64, 0.8697899, 3.845),
    0.10: BoundParams(0.41014, -0.28018, 70.114, 0.7690223, 7.7214),
    0.20: BoundParams(0.46939, -0.41971, 70.6, 0.5743807, 13.6775),
    0.30: BoundParams(0.37195, -0.42148, 72.091, 0.3582853, 18.5516),
    0.40: BoundParams(0.19823, -0.28368, 82.639, 0.1324455, 24.483),
    0.49: BoundParams(0.0200998, -0.0353299, 114.58, 0.001961311, 34.225),
}


def bound_c1(alpha: float, bp: BoundParams, lam) -> float:
    """Leading coefficient of the tail bound, a ratio of cubics in sqrt(lam).

    numerator   (1+z)(g0 + sz g1) - (2 sz g0 + g1 + 2 z g1) sqrt(lam)
                + (g0 + sz g1) lam
    denominator (sqrt(lam) - sz) ((sqrt(lam) - sz)^2 + 1)

    with z the chi-square critical value and sz its square root.  Turns
    negative for large lam exactly when g0 < -sz g1.
    """
    z = _chi2(alpha)
    sz = math.sqrt(z)
    g0, g1 = bp.gamma0, bp.gamma1
    sl = np.sqrt(np.asarray(lam, dtype=float))
    num = ((1 + z) * (g0 + sz * g1)
           - (2 * sz * g0 + g1 + 2 * z * g1) * sl
           + (g0 + sz * g1) * sl * sl)
    den = (sl - sz) * ((sl - sz) ** 2 + 1.0)
    out = num / den
    return float(out) if np.ndim(out) == 0 else out


def truncated_bound_ub(alpha: float, bp: BoundParams, lam) -> float:
    """Closed-form upper bound for the truncated discrepancy at large lam.

    Valid for lam > chi2 / 4 (and singular exactly at lam = chi2, where the
    leading coefficient has a pole).  Combines normal tail inequalities with
    the antiderivative of sqrt(v) g(v; lam).
    """
    z = _chi2(alpha)
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr <= z / 4.0):
        raise ValueError("bound is valid for lam > chi2 / 4 only")
    sz = math.sqrt(z)
    sl = np.sqrt(lam_arr)
    c1 = bound_c1(alpha, bp, lam_arr)
    c2 = (sz + sl) * (bp.gamma0 - bp.gamma1 * sl) / (1.0 + z + 2.0 * sz * sl + lam_arr)
    out = (np.exp(-0.5 * lam_arr) / math.sqrt(2.0 * math.pi)
           * (np.exp(-0.5 * z + sz * sl) * c1
              - np.exp(-0.5 * z - sz * sl) * c2
              - 2.0 * bp.gamma1))
    return float(out) if np.ndim(out) == 0 else out


def c1_negative_crossing(alpha: float, bp: BoundParams) -> float:
    """Largest root of the c1 numerator; c1 < 0 beyond it."""
    z = _chi2(alpha)
    sz = math.sqrt(z)
    g0, g1 = bp.gamma0, bp.gamma1
    a = g0 + sz * g1
    b = -(2 * sz * g0 + g1 + 2 * z * g1)
    c = (1 + z) * a
    disc = b * b - 4 * a * c
    if disc < 0:
        raise ValueError("no real crossing for these bound parameters")
    roots = [(-b + math.sqrt(disc)) / (2 * a), (-b - math.sqrt(disc)) / (2 * a)]
    s = max(r for r in roots if r > 0)
    return s * s


def ub_negative_crossing(alpha: float, bp: BoundParams, *,
                         lam_max: float = 500.0, tol: float = 1e-4) -> float:
    """Last zero of the tail bound; the bound stays negative beyond it."""
    z = _chi2(alpha)
    grid = np.geomspace(z * 1.02, lam_max, 4000)
    vals = truncated_bound_ub(alpha, bp, grid)
    sign_change = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if len(sign_change) == 0:
        raise ValueError("no crossing found below lam_max")
    i = sign_change[-1]
    lo, hi = grid[i], grid[i + 1]
    flo = truncated_bound_ub(alpha, bp, lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = truncated_bound_ub(alpha, bp, mid)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- curve sampling / export --------------------------------------------------


@dataclass(frozen=True)
class DiscrepancyCurve:
    alpha: float
    b: float
    samples: tuple  # (lam, D) pairs
    roots: tuple    # lam values where D crosses zero or D' vanishes


def sample_discrepancy_curve(alpha: float, b: float,
                             lams: Sequence[float]) -> DiscrepancyCurve:
    """Discrepancy values on a grid, with zero crossings and stationary points."""
    lams = np.asarray(lams, dtype=float)
    rule = augmented_rule(alpha, b)
    vals = rule.values(lams)
    derivs = rule.dlambda_values(lams)
    roots = []
    for seq in (vals, derivs):
        sign = np.sign(seq)
        for i in np.nonzero(sign[:-1] != sign[1:])[0]:
            lo, hi = lams[i], lams[i + 1]
            f = (lambda l: rule.values(l)) if seq is vals else (lambda l: rule.dlambda_values(l))
            flo = f(lo)
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                fm = f(mid)
                if np.sign(fm) == np.sign(flo):
                    lo, flo = mid, fm
                else:
                    hi = mid
            roots.append(0.5 * (lo + hi))
    return DiscrepancyCurve(alpha=alpha, b=b,
                            samples=tuple(zip(lams.tolist(), np.atleast_1d(vals).tolist())),
                            roots=tuple(sorted(roots)))


def write_curve_csv(path_or_buf, lams, values) -> None:
    """Write a lambda,value curve in CSV form."""
    import csv

    close = False
    if isinstance(path_or_buf, (str, bytes)):
        buf = open(path_or_buf, "w", newline="")
        close = True
    else:
        buf = path_or_buf
    try:
        w = csv.writer(buf)
        w.writerow(["lambda", "value"])
        for l, v in zip(np.asarray(lams).tolist(), np.asarray(values).tolist()):
            w.writerow([repr(float(l)), repr(float(v))])
    finally:
        if close:
            buf.close()


def log_tail_mass(alpha: float, b: float, lam: float) -> float:
    """log of G(chi2 / b; lam); bounds every augmented-region content.

    Used to recognize noncentralities where the discrepancy is provably far
    below any calibration tolerance even though double precision underflows.
    """
    _check_level(alpha)
    return log_nc_chisq1_cdf(_chi2(alpha) / max(b, 1e-300), lam)
