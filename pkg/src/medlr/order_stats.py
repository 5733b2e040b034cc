"""Joint distribution of the ordered squared t-statistics.

After reduction by sign changes and permutation, the sample point is the
ordered pair (v1, v2) of squared t-statistics living on the octant
0 <= v1 <= v2.  The joint density under noncentralities (lam1, lam2) is

    g(v1; lam1) g(v2; lam2) + g(v2; lam1) g(v1; lam2),

and the canonical partition of the octant at a threshold z consists of
  - region 1: both coordinates above z (the LR rejection region at z),
  - region 2: straddling z (v1 < z < v2),
  - region 3: both below z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import nc_chisq1_cdf, nc_chisq_pdf

__all__ = [
    "OrderedPair",
    "NoncentralityPair",
    "RegionProbs",
    "joint_pdf",
    "null_joint_pdf",
    "marginal_v1_pdf",
    "marginal_v1_cdf",
    "region_probs",
]


@dataclass(frozen=True)
class OrderedPair:
    """Ordered squared t-statistics, 0 <= v1 <= v2."""

    v1: float
    v2: float

    def __post_init__(self):
        if not (0.0 <= self.v1 <= self.v2 < np.inf):
            raise ValueError(f"invalid ordered pair ({self.v1}, {self.v2})")

    @classmethod
    def from_squares(cls, f1: float, f2: float) -> "OrderedPair":
        if f1 < 0 or f2 < 0:
            raise ValueError("squared statistics must be >= 0")
        return cls(min(f1, f2), max(f1, f2))

    @classmethod
    def from_statistics(cls, t1: float, t2: float) -> "OrderedPair":
        return cls.from_squares(t1 * t1, t2 * t2)

    @property
    def ratio(self) -> float:
        """v1 / v2, defined as 0 at the origin."""
        return self.v1 / self.v2 if self.v2 > 0 else 0.0


@dataclass(frozen=True)
class NoncentralityPair:
    lambda1: float
    lambda2: float

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("noncentralities must be >= 0")
        if not (np.isfinite(self.lambda1) and np.isfinite(self.lambda2)):
            raise ValueError("noncentralities must be finite")


@dataclass(frozen=True)
class RegionProbs:
    """Probabilities of the threshold partition; sums to one."""

    p_a1: float
    p_a2: float
    p_a3: float


def _unpack_nc(nc) -> tuple[float, float]:
    if isinstance(nc, NoncentralityPair):
        return nc.lambda1, nc.lambda2
    l1, l2 = nc
    NoncentralityPair(l1, l2)
    return float(l1), float(l2)


def joint_pdf(pt: OrderedPair, nc) -> float:
    """Joint density of (v1, v2); symmetric in the noncentralities."""
    l1, l2 = _unpack_nc(nc)
    g = nc_chisq_pdf
    return g(pt.v1, l1) * g(pt.v2, l2) + g(pt.v2, l1) * g(pt.v1, l2)


def null_joint_pdf(pt: OrderedPair, lam: float) -> float:
    """Joint density when one noncentrality vanishes."""
    return joint_pdf(pt, (0.0, lam))


def marginal_v1_pdf(v, nc):
    """Density of the smaller order statistic."""
    l1, l2 = _unpack_nc(nc)
    v = np.asarray(v, dtype=float)
    g, G = nc_chisq_pdf, nc_chisq1_cdf
    return g(v, l1) * (1.0 - G(v, l2)) + g(v, l2) * (1.0 - G(v, l1))


def marginal_v1_cdf(v, nc):
    """CDF of the smaller order statistic: G1 + G2 - G1*G2."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("argument must be >= 0")
    l1, l2 = _unpack_nc(nc)
    g1 = nc_chisq1_cdf(v, l1)
    g2 = nc_chisq1_cdf(v, l2)
    out = g1 + g2 - g1 * g2
    return float(out) if np.ndim(out) == 0 else out


def region_probs(z: float, lam: float) -> RegionProbs:
    """Null probabilities of the three regions cut at threshold z.

    With Gc the central CDF and Gn the noncentral one at z:
      region 1 (both above)  [1 - Gc][1 - Gn]
      region 2 (straddling)  Gc [1 - Gn] + Gn [1 - Gc]
      region 3 (both below)  Gc Gn
    """
    if z <= 0:
        raise ValueError("threshold must be > 0")
    gc = nc_chisq1_cdf(z, 0.0)
    gn = nc_chisq1_cdf(z, lam)
    return RegionProbs(
        p_a1=(1.0 - gc) * (1.0 - gn),
        p_a2=gc * (1.0 - gn) + gn * (1.0 - gc),
        p_a3=gc * gn,
    )
