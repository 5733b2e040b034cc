"""Numerical calibration of the ratio thresholds.

The optimal threshold b(alpha) for the simply augmented test is the smallest
b whose discrepancy stays below a tolerance eps at every stationary point of
the discrepancy in the noncentrality:

  1. on a fixed noncentrality grid, locate the sign changes of the
     lam-derivative and bisect each to a stationary point;
  2. walk b downward in steps delta until a stationary value violates the
     tolerance (with a guard that also stops once the smallest local maximum
     has risen to within eps of zero, which pins the double-root tangency);
  3. back off one step, shrink delta tenfold, and repeat.

Default eps is 1e-9, which reproduces the shipped percentile table; the
1e-16 profile reproduces the high-precision anchors and moves b(alpha) only
where the binding stationary point sits in the far tail (noticeably at
alpha around 0.1).

The truncated variant is calibrated to tangency instead: the global maximum
of its discrepancy is driven into [-1e-10, 0], since that family must never
over-reject.

Stationary points so deep in the tail that double precision cannot represent
the discrepancy are recognized through a log-space bound on the augmented
region's mass (the content below chi2/b bounds everything) and count as
satisfying the tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from ._quad import WeightedRule
from .distributions import chisq1_quantile, log_nc_chisq1_cdf
from .rules import CriticalPair, CriticalTable
from .size_power import augmented_rule, truncated_rule

__all__ = [
    "ConvergenceError",
    "CalibrationConfig",
    "CalibrationResult",
    "default_lambda_grid",
    "b_of_lambda",
    "optimal_b",
    "optimal_b_truncated",
    "generate_table",
    "trace_to_tsv",
]

# discrepancies bounded below exp(_LOG_FLOOR) are beyond double evaluation
_LOG_FLOOR = -640.0


class ConvergenceError(RuntimeError):
    """Calibration failed to converge; carries the descent trace."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace or []


def default_lambda_grid(extend_to: float = 1e4) -> np.ndarray:
    """Noncentrality grid for stationary-point detection.

    Dense to 5, medium to 30, unit-spaced to 150, then logarithmic so that
    binding points that migrate into the tail at small levels stay covered.
    """
    parts = [
        np.arange(0.0001, 5.0001, 0.01),
        np.arange(5.2, 30.0001, 0.2),
        np.arange(31.0, 150.0001, 1.0),
    ]
    if extend_to > 150.0:
        parts.append(np.geomspace(155.0, extend_to, 60))
    return np.concatenate(parts)


@dataclass(frozen=True)
class CalibrationConfig:
    epsilon: float = 1e-9
    lambda_grid: Optional[np.ndarray] = None
    delta_init: float = 1e-4
    delta_shrink: float = 10.0
    max_refinements: int = 10
    root_tolerance: float = 1e-10
    b_start: Optional[float] = None
    max_steps: int = 200_000

    def grid(self) -> np.ndarray:
        if self.lambda_grid is not None:
            return np.asarray(self.lambda_grid, dtype=float)
        return default_lambda_grid()


@dataclass
class CalibrationResult:
    alpha: float
    b_opt: float
    roots: tuple          # (lam, discrepancy) at each stationary point
    iterations: int
    evaluations: int
    trace: list = field(default_factory=list)
    lambda_star: Optional[float] = None


@dataclass(frozen=True)
class _Stationary:
    lam: float
    value: float
    is_max: bool
    checkable: bool      # False when only the log-space bound is available


class _Profile:
    """Stationary-point analysis of a discrepancy rule family in b."""

    def __init__(self, alpha: float, eps: float, grid: np.ndarray,
                 root_tol: float, truncated: bool = False):
        self.alpha = alpha
        self.eps = eps
        self.grid = grid
        self.root_tol = root_tol
        self.truncated = truncated
        self.evaluations = 0
        z = chisq1_quantile(1.0 - alpha)
        self._chi2 = z

    def _rule(self, b: float) -> WeightedRule:
        self.evaluations += 1
        if self.truncated:
            return truncated_rule(self.alpha, b)
        return augmented_rule(self.alpha, b)

    def _tail_checkable(self, b: float, lam: float) -> bool:
        """True when the discrepancy at lam is representable in doubles.

        |D| <= 2 G(z_top; lam) with z_top the upper edge of the augmented
        region, so once log G falls below the floor the point provably
        satisfies any realistic tolerance.
        """
        z_top = self._chi2 if self.truncated else self._chi2 / max(b, 1e-300)
        return log_nc_chisq1_cdf(z_top, lam) > _LOG_FLOOR

    def stationary_points(self, b: float) -> list[_Stationary]:
        rule = self._rule(b)
        grid = self.grid
        dvals = rule.dlambda_values(grid)
        sign = np.sign(dvals)
        pts: list[_Stationary] = []
        for i in np.nonzero((sign[:-1] != sign[1:]) & (sign[:-1] != 0))[0]:
            lo, hi = grid[i], grid[i + 1]
            if not self._tail_checkable(b, lo):
                continue
            flo = dvals[i]
            while hi - lo > self.root_tol * max(1.0, 0.5 * (lo + hi)):
                mid = 0.5 * (lo + hi)
                fm = rule.dlambda_values(mid)
                if np.sign(fm) == np.sign(flo):
                    lo, flo = mid, fm
                else:
                    hi = mid
            lam = 0.5 * (lo + hi)
            checkable = self._tail_checkable(b, lam)
            pts.append(_Stationary(lam=lam,
                                   value=rule.values(lam) if checkable else 0.0,
                                   is_max=dvals[i] > 0,
                                   checkable=checkable))
        return pts

    def violates(self, b: float) -> tuple[bool, list[_Stationary]]:
        pts = self.stationary_points(b)
        maxima = [p for p in pts if p.is_max and p.checkable]
        if any(p.value > self.eps for p in maxima):
            return True, pts
        # tangency guard: with several stationary points, stop once the
        # smallest local maximum has climbed to within eps of zero
        if len(pts) >= 2 and pts[0].is_max and pts[0].checkable:
            if pts[0].value > -self.eps:
                return True, pts
        return False, pts


def b_of_lambda(alpha: float, lam: float, *, tol: float = 1e-10) -> float:
    """The unique b in (0, 1] with zero discrepancy at this noncentrality."""
    if not 0.0 < alpha < 0.5:
        raise ValueError("level must lie in (0, 1/2)")
    lo, hi = 1e-9, 1.0
    f_hi = augmented_rule(alpha, hi).values(lam)   # -alpha G < 0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        fm = augmented_rule(alpha, mid).values(lam)
        if abs(fm) <= tol and hi - lo < 1e-6:
            return mid
        if np.sign(fm) == np.sign(f_hi):
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def _prelocalize(profile: _Profile, delta: float) -> float:
    """Coarse bisection for a non-violating starting b, then one step up."""
    lo, hi = 1e-6, 1.0 - 1e-12
    if profile.violates(hi)[0]:
        return hi  # degenerate; the descent loop will walk upward
    if not profile.violates(lo)[0]:
        return lo + delta
    while hi - lo > 5e-4:
        mid = 0.5 * (lo + hi)
        if profile.violates(mid)[0]:
            lo = mid
        else:
            hi = mid
    return min(1.0, hi + 2.0 * delta)


def optimal_b(alpha: float, cfg: Optional[CalibrationConfig] = None) -> CalibrationResult:
    """Smallest b whose discrepancy respects the tolerance at every
    stationary point, located by the shrinking-step descent."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("level must lie in (0, 1)")
    cfg = cfg or CalibrationConfig()
    profile = _Profile(alpha, cfg.epsilon, cfg.grid(), cfg.root_tolerance)
    return _descend(profile, cfg, alpha)


def _descend(profile: _Profile, cfg: CalibrationConfig, alpha: float) -> CalibrationResult:
    delta = cfg.delta_init
    b = cfg.b_start if cfg.b_start is not None else _prelocalize(profile, delta)
    trace: list = []
    iterations = 0

    bad, pts = profile.violates(b)
    while bad:
        b = min(1.0, b + 10.0 * delta)
        iterations += 1
        if b >= 1.0 or iterations > cfg.max_steps:
            raise ConvergenceError(
                f"no admissible starting threshold found for level {alpha}", trace)
        bad, pts = profile.violates(b)

    for _ in range(cfg.max_refinements):
        while True:
            bad, pts_lo = profile.violates(b - delta)
            iterations += 1
            if iterations > cfg.max_steps:
                raise ConvergenceError(
                    f"calibration for level {alpha} exceeded the step budget", trace)
            trace.append((b - delta, tuple((p.lam, p.value) for p in pts_lo)))
            if bad:
                break
            b -= delta
        delta /= cfg.delta_shrink

    _, pts = profile.violates(b)
    return CalibrationResult(
        alpha=alpha,
        b_opt=b,
        roots=tuple((p.lam, p.value) for p in pts),
        iterations=iterations,
        evaluations=profile.evaluations,
        trace=trace,
    )


def optimal_b_truncated(alpha: float,
                        cfg: Optional[CalibrationConfig] = None) -> CalibrationResult:
    """Tangency calibration of the truncated test.

    Finds b_bar with the global maximum of the truncated discrepancy in
    [-1e-10, 0]; above one half the augmentation threshold degenerates to 0.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("level must lie in (0, 1)")
    cfg = cfg or CalibrationConfig()
    if alpha >= 0.5:
        return CalibrationResult(alpha=alpha, b_opt=0.0, roots=(),
                                 iterations=0, evaluations=0, lambda_star=None)
    profile = _Profile(alpha, cfg.epsilon, cfg.grid(), cfg.root_tolerance,
                       truncated=True)

    def peak(b: float) -> tuple[float, float]:
        pts = [p for p in profile.stationary_points(b) if p.is_max and p.checkable]
        rule = truncated_rule(alpha, b)
        cands = [(p.lam, p.value) for p in pts]
        cands.append((0.0, rule.values(0.0)))
        lam, val = max(cands, key=lambda t: t[1])
        return lam, val

    lo, hi = 1e-9, 1.0
    iterations = 0
    # peak value decreases in b; bracket then bisect on its sign
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        _, val = peak(mid)
        iterations += 1
        if val > 0.0:
            lo = mid
        else:
            hi = mid
        if iterations > 200:
            break
    lam_star, val = peak(hi)
    if not -1e-9 < val <= 1e-12:
        raise ConvergenceError(
            f"truncated calibration for level {alpha} left residual {val}")
    return CalibrationResult(alpha=alpha, b_opt=hi,
                             roots=((lam_star, val),),
                             iterations=iterations,
                             evaluations=profile.evaluations,
                             lambda_star=lam_star)


@lru_cache(maxsize=256)
def optimal_b_value(alpha: float, epsilon: float = 1e-9) -> float:
    """Cached scalar front end used by p-value refinement and reporting."""
    return optimal_b(alpha, CalibrationConfig(epsilon=epsilon)).b_opt


@lru_cache(maxsize=256)
def optimal_b_truncated_value(alpha: float) -> float:
    return optimal_b_truncated(alpha).b_opt


def _table_row(args) -> CriticalPair:
    level, cfg = args
    if level == 0.0:
        return CriticalPair(alpha=0.0, b_alpha=1.0, chi_alpha=math.inf)
    if level == 1.0:
        return CriticalPair(alpha=1.0, b_alpha=0.0, chi_alpha=0.0)
    res = optimal_b(level, cfg)
    return CriticalPair(alpha=level, b_alpha=res.b_opt,
                        chi_alpha=chisq1_quantile(1.0 - level))


def generate_table(levels: Sequence[float],
                   cfg: Optional[CalibrationConfig] = None,
                   workers: Optional[int] = None) -> CriticalTable:
    """Calibrate a table row per level; endpoints 0 and 1 are analytic.

    Levels are calibrated independently, so the work parallelizes across
    processes; the output ordering is by level regardless of worker count.
    """
    cfg = cfg or CalibrationConfig()
    levels = sorted(set(float(a) for a in levels))
    for a in levels:
        if not 0.0 <= a <= 1.0:
            raise ValueError("levels must lie in [0, 1]")
    jobs = [(a, cfg) for a in levels]
    if workers and workers > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_table_row, jobs, chunksize=4))
    else:
        rows = [_table_row(j) for j in jobs]
    return CriticalTable(rows)


def trace_to_tsv(result: CalibrationResult) -> str:
    """Audit log of the descent: one line per step with roots and values."""
    lines = ["b\troots\tdiscrepancies"]
    for b, roots in result.trace:
        lams = ",".join(f"{lam:.6f}" for lam, _ in roots)
        vals = ",".join(f"{val:.3e}" for _, val in roots)
        lines.append(f"{b!r}\t{lams}\t{vals}")
    return "\n".join(lines) + "\n"
