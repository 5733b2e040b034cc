"""Decision rules for the no-mediation tests and the calibrated lookup table.

Five rejection rules operate on the ordered pair (v1, v2):

  LR                 v1 > chi2(alpha)
  Wald               v1 v2 / (v1 + v2) > chi2(alpha)
  simply augmented   v1 > chi2(alpha)  or  v1 / v2 > b(alpha)
  truncated          v1 > chi2(alpha)  or  (v1 / v2 > b_bar and v2 < chi2(alpha))
  exact              LR region plus diagonal triangles between the knots

Rejection inequalities are strict throughout; the origin (0, 0) never rejects
through the ratio clause.  The simply augmented family over a calibrated table
is nested in the level, which is what makes its p-values well defined.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .distributions import chisq1_quantile, nc_chisq1_cdf
from .order_stats import OrderedPair

__all__ = [
    "RejectionCause",
    "CriticalPair",
    "CriticalTable",
    "ExactTestSpec",
    "TestReport",
    "lr_statistic",
    "wald_statistic",
    "decide_lr",
    "decide_wald",
    "decide_simply_augmented",
    "decide_truncated",
    "build_exact_spec",
    "decide_exact",
    "p_value",
    "coherence_scan",
    "scan_decision_family",
]


class RejectionCause(str, enum.Enum):
    LR_BOUNDARY = "lr_boundary"
    RATIO_BOUNDARY = "ratio_boundary"
    NONE = "none"


@dataclass(frozen=True)
class CriticalPair:
    """One table row: level, chi-square critical value, ratio critical value."""

    alpha: float
    chi_alpha: float
    b_alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("level must lie in [0, 1]")
        if not 0.0 <= self.b_alpha <= 1.0:
            raise ValueError("ratio critical value must lie in [0, 1]")
        if 0.0 < self.alpha < 1.0:
            p = nc_chisq1_cdf(self.chi_alpha)
            if abs(p - (1.0 - self.alpha)) > 1e-9:
                raise ValueError(
                    f"chi-square value {self.chi_alpha} inconsistent with level {self.alpha}")


class CriticalTable:
    """Ordered rows of (alpha, b, chi2) spanning the unit interval of levels.

    The table is immutable after construction and safe to share.  Rows must be
    strictly increasing in alpha, with b strictly decreasing and chi2 strictly
    decreasing, which makes the rejection regions nested across levels.
    """

    def __init__(self, rows: Sequence[CriticalPair]):
        rows = tuple(sorted(rows, key=lambda r: r.alpha))
        if len(rows) < 2:
            raise ValueError("table needs at least two rows")
        alphas = np.array([r.alpha for r in rows])
        bs = np.array([r.b_alpha for r in rows])
        chis = np.array([r.chi_alpha for r in rows])
        if np.any(np.diff(alphas) <= 0):
            raise ValueError("levels must be strictly increasing")
        if np.any(np.diff(bs) >= 0):
            raise ValueError("b column must be strictly decreasing")
        if np.any(np.diff(chis) >= 0):
            raise ValueError("chi2 column must be strictly decreasing")
        self._rows = rows
        self._alphas = alphas
        self._bs = bs
        self._chis = chis

    @property
    def rows(self) -> tuple[CriticalPair, ...]:
        return self._rows

    @property
    def alphas(self) -> np.ndarray:
        return self._alphas.copy()

    def __len__(self) -> int:
        return len(self._rows)

    def row(self, alpha: float, tol: float = 1e-12) -> CriticalPair:
        i = int(np.argmin(np.abs(self._alphas - alpha)))
        if abs(self._alphas[i] - alpha) > tol:
            raise KeyError(f"level {alpha} not in table")
        return self._rows[i]

    def b_at(self, alpha: float) -> float:
        """Ratio critical value at a level, linearly interpolated."""
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("level must lie in [0, 1]")
        return float(np.interp(alpha, self._alphas, self._bs))

    def alpha_from_ratio(self, ratio: float) -> float:
        """Invert the b column by monotone linear interpolation."""
        if not 0.0 <= ratio <= 1.0:
            raise ValueError("ratio must lie in [0, 1]")
        # b is decreasing in alpha; interp wants increasing x
        return float(np.interp(ratio, self._bs[::-1], self._alphas[::-1]))

    # -- serialization: full double precision, bit-exact round trip ---------

    def to_csv(self, path_or_buf) -> None:
        close = False
        if isinstance(path_or_buf, (str, bytes)):
            buf = open(path_or_buf, "w", newline="")
            close = True
        else:
            buf = path_or_buf
        try:
            writer = csv.writer(buf)
            writer.writerow(["alpha", "b", "chi2"])
            for r in self._rows:
                writer.writerow([repr(r.alpha), repr(r.b_alpha), repr(r.chi_alpha)])
        finally:
            if close:
                buf.close()

    @classmethod
    def from_csv(cls, path_or_buf) -> "CriticalTable":
        close = False
        if isinstance(path_or_buf, (str, bytes)):
            buf = open(path_or_buf, "r", newline="")
            close = True
        else:
            buf = path_or_buf
        try:
            reader = csv.reader(buf)
            header = next(reader)
            if header != ["alpha", "b", "chi2"]:
                raise ValueError(f"unexpected header {header}")
            rows = [CriticalPair(alpha=float(a), b_alpha=float(b), chi_alpha=float(c))
                    for a, b, c in reader if a]
        finally:
            if close:
                buf.close()
        return cls(rows)

    def to_json(self) -> str:
        return json.dumps({
            "rows": [{"alpha": r.alpha, "b": r.b_alpha, "chi2": r.chi_alpha}
                     for r in self._rows]
        })

    @classmethod
    def from_json(cls, text: str) -> "CriticalTable":
        data = json.loads(text)
        return cls([CriticalPair(alpha=r["alpha"], b_alpha=r["b"], chi_alpha=r["chi2"])
                    for r in data["rows"]])

    @classmethod
    def default(cls) -> "CriticalTable":
        """The calibrated percentile table shipped with the package."""
        from importlib.resources import files

        text = files("medlr.data").joinpath("critical_table.csv").read_text()
        return cls.from_csv(io.StringIO(text))


@dataclass(frozen=True)
class ExactTestSpec:
    """Knots of the exactly similar test at level 1 / (r + 2)."""

    r: int
    knots: tuple[float, ...]

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("r must be >= 0")
        if len(self.knots) != self.r + 1:
            raise ValueError("need r + 1 knots")
        if np.any(np.diff(self.knots) <= 0):
            raise ValueError("knots must be strictly increasing")

    @property
    def alpha(self) -> float:
        return 1.0 / (self.r + 2)


@dataclass
class TestReport:
    """Decisions of all rules and the p-value for one sample point."""

    point: OrderedPair
    alpha: float
    lr_stat: float
    wald_stat: float
    decisions: dict
    rejection_cause: RejectionCause
    p_value: float
    t1: Optional[float] = None
    t2: Optional[float] = None

    def to_json(self) -> str:
        payload = {
            "t1": self.t1,
            "t2": self.t2,
            "v1": self.point.v1,
            "v2": self.point.v2,
            "alpha": self.alpha,
            "lr_stat": self.lr_stat,
            "wald_stat": self.wald_stat,
            "decisions": {k: v for k, v in self.decisions.items()},
            "p_value": self.p_value,
            "cause": self.rejection_cause.value,
        }
        return json.dumps(payload)


def lr_statistic(f1: float, f2: float) -> float:
    """min(f1, f2); the likelihood-ratio statistic."""
    if f1 < 0 or f2 < 0:
        raise ValueError("squared statistics must be >= 0")
    return min(f1, f2)


def wald_statistic(v1: float, v2: float) -> float:
    """v1 v2 / (v1 + v2), with the origin mapped to 0."""
    if v1 < 0 or v2 < 0:
        raise ValueError("squared statistics must be >= 0")
    if v1 + v2 == 0:
        return 0.0
    return v1 * v2 / (v1 + v2)


def decide_lr(pt: OrderedPair, alpha: float) -> bool:
    return pt.v1 > chisq1_quantile(1.0 - alpha)


def decide_wald(pt: OrderedPair, alpha: float) -> bool:
    return wald_statistic(pt.v1, pt.v2) > chisq1_quantile(1.0 - alpha)


def decide_simply_augmented(pt: OrderedPair, cp: CriticalPair) -> tuple[bool, RejectionCause]:
    """LR clause first, ratio clause second; reports which clause fired."""
    if pt.v1 > cp.chi_alpha:
        return True, RejectionCause.LR_BOUNDARY
    if pt.v2 > 0 and pt.v1 / pt.v2 > cp.b_alpha:
        return True, RejectionCause.RATIO_BOUNDARY
    return False, RejectionCause.NONE


def decide_truncated(pt: OrderedPair, alpha: float, b_bar: float) -> bool:
    chi = chisq1_quantile(1.0 - alpha)
    if pt.v1 > chi:
        return True
    return pt.v2 > 0 and pt.v2 < chi and pt.v1 / pt.v2 > b_bar


def build_exact_spec(r: int) -> ExactTestSpec:
    """Knots solving G(z_i) = i / (r + 2) for i = 1..r+1."""
    if r < 0:
        raise ValueError("r must be >= 0")
    probs = np.arange(1, r + 2) / (r + 2)
    knots = tuple(float(chisq1_quantile(p)) for p in probs)
    return ExactTestSpec(r=r, knots=knots)


def decide_exact(pt: OrderedPair, spec: ExactTestSpec) -> bool:
    """Membership in the exact critical region.

    Above the top knot in v1 is the LR region; above it only in v2 is
    acceptance; otherwise locate the band z_i < v2 <= z_{i+1} (z_0 = 0) and
    reject when v1 >= z_i.
    """
    top = spec.knots[-1]
    if pt.v1 > top:
        return True
    if pt.v2 > top:
        return False
    knots = (0.0,) + spec.knots
    i = int(np.searchsorted(knots, pt.v2, side="left")) - 1
    i = max(i, 0)
    return pt.v1 >= knots[i]


def p_value(pt: OrderedPair, table: CriticalTable, *, refine: bool = False,
            refine_below: float = 0.01, refine_cells: int = 8) -> float:
    """p-value of the simply augmented test by table lookup.

    The level at which the point sits on the horizontal boundary is
    alpha1 = 1 - G(v1).  If the ratio v1/v2 does not exceed b(alpha1) that is
    the p-value; otherwise the point sits on a sloping boundary and the
    p-value is the b-column inverse of the ratio, linearly interpolated.

    With refine=True, interpolated p-values below `refine_below` are
    recomputed on a locally subdivided level grid calibrated on demand.
    """
    if pt.v1 == 0.0:
        return 1.0
    alpha1 = 1.0 - nc_chisq1_cdf(pt.v1)
    ratio = pt.ratio
    if ratio <= table.b_at(alpha1):
        return alpha1
    p = table.alpha_from_ratio(ratio)
    if refine and p < refine_below:
        p = _refined_ratio_inverse(table, ratio, refine_cells)
    return min(max(p, 0.0), 1.0)


def _refined_ratio_inverse(table: CriticalTable, ratio: float, cells: int) -> float:
    """Invert the b column on a locally recalibrated sub-grid."""
    from . import calibrate

    alphas = table.alphas
    rough = table.alpha_from_ratio(ratio)
    hi = float(alphas[np.searchsorted(alphas, rough, side="left")])
    lo = float(alphas[max(np.searchsorted(alphas, rough, side="left") - 1, 0)])
    if hi <= lo:
        return rough
    grid = np.linspace(lo, hi, cells + 1)
    bs, levels = [], []
    for a in grid:
        if a <= 0.0:
            bs.append(1.0)
        else:
            bs.append(calibrate.optimal_b(a).b_opt)
        levels.append(a)
    bs = np.array(bs)
    levels = np.array(levels)
    return float(np.interp(ratio, bs[::-1], levels[::-1]))


def scan_decision_family(rules: Sequence[tuple[float, Callable[[OrderedPair], bool]]],
                         points: Iterable[OrderedPair]) -> list:
    """Nesting violations across an ordered family of decision rules.

    rules are (level, decide) pairs; a violation is a point rejected at some
    level but accepted at a larger one.
    """
    ordered = sorted(rules, key=lambda lr: lr[0])
    violations = []
    for pt in points:
        decisions = [dec(pt) for _, dec in ordered]
        for i in range(len(decisions) - 1):
            if decisions[i] and not decisions[i + 1]:
                violations.append((pt, ordered[i][0], ordered[i + 1][0]))
    return violations


def coherence_scan(table: CriticalTable, points: Iterable[OrderedPair]) -> list:
    """Nesting violations of the simply augmented family over table levels.

    Returns an empty list for a valid calibrated table: both critical columns
    are monotone, so the regions are nested and rejection at a level implies
    rejection at every larger level.
    """
    pts = list(points)
    v1 = np.array([p.v1 for p in pts])
    v2 = np.array([p.v2 for p in pts])
    ratio = np.divide(v1, v2, out=np.zeros_like(v1), where=v2 > 0)
    interior = [r for r in table.rows if 0.0 < r.alpha < 1.0]
    # reject matrix: points x levels
    chi = np.array([r.chi_alpha for r in interior])
    bs = np.array([r.b_alpha for r in interior])
    reject = (v1[:, None] > chi[None, :]) | (ratio[:, None] > bs[None, :])
    bad = reject[:, :-1] & ~reject[:, 1:]
    violations = []
    for i, j in zip(*np.nonzero(bad)):
        violations.append((pts[i], interior[j].alpha, interior[j + 1].alpha))
    return violations
