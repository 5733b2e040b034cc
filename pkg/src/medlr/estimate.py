"""Data pipeline: regressions, t-statistics, and assembled test reports.

The two-equation system is

    m = theta1 * x + u1
    y = tau * x + theta2 * m + u2

optionally after projecting controls (and an intercept) out of y, x, m.
Ordinary t-statistics follow the classical least-squares form; robust ones
use the stacked-system sandwich covariance with regressor matrix rows
(x 0 0; 0 x m), no degrees-of-freedom correction.  A logit variant replaces
the outcome equation by maximum likelihood when y is binary.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from . import calibrate
from .distributions import chisq1_quantile, nc_chisq1_cdf
from .order_stats import OrderedPair
from .rules import (
    CriticalPair,
    CriticalTable,
    RejectionCause,
    TestReport,
    build_exact_spec,
    decide_exact,
    decide_lr,
    decide_simply_augmented,
    decide_truncated,
    decide_wald,
    lr_statistic,
    p_value,
    wald_statistic,
)

__all__ = [
    "Dataset",
    "RegressionFit",
    "MediationOptions",
    "read_dataset_csv",
    "residualize",
    "fit_linear",
    "robust_t",
    "fit_logit_outcome",
    "run_mediation_test",
    "test_from_tstats",
]


@dataclass(frozen=True)
class Dataset:
    """Outcome, treatment, mediator, and optional control columns."""

    y: np.ndarray
    x: np.ndarray
    m: np.ndarray
    controls: Optional[np.ndarray] = None
    names: Optional[tuple] = None
    n_projected: int = 0

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        m = np.asarray(self.m, dtype=float)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "m", m)
        if not (y.shape == x.shape == m.shape) or y.ndim != 1:
            raise ValueError("y, x, m must be equal-length vectors")
        for name, arr in (("y", y), ("x", x), ("m", m)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"column {name} contains missing or non-finite values")
        if self.controls is not None:
            c = np.asarray(self.controls, dtype=float)
            if c.ndim == 1:
                c = c[:, None]
            if c.shape[0] != y.shape[0]:
                raise ValueError("controls must have the same number of rows")
            if not np.all(np.isfinite(c)):
                raise ValueError("controls contain missing or non-finite values")
            object.__setattr__(self, "controls", c)
        k = 0 if self.controls is None else self.controls.shape[1]
        if len(y) <= k + 3:
            raise ValueError("not enough observations for the model")

    @property
    def n(self) -> int:
        return len(self.y)


@dataclass
class RegressionFit:
    theta1_hat: float
    tau_hat: float
    theta2_hat: float
    s_xx: float
    s11: float
    s22: float
    se1_ordinary: float
    se2_ordinary: float
    t1_ordinary: float
    t2_ordinary: float
    df1: int
    df2: int
    resid1: np.ndarray = field(repr=False, default=None)
    resid2: np.ndarray = field(repr=False, default=None)
    x: np.ndarray = field(repr=False, default=None)
    m: np.ndarray = field(repr=False, default=None)
    t1_robust: Optional[float] = None
    t2_robust: Optional[float] = None
    model: str = "linear"


@dataclass(frozen=True)
class MediationOptions:
    se_mode: str = "robust"
    model: str = "linear"
    alpha: float = 0.05
    table: Optional[CriticalTable] = None

    def __post_init__(self):
        if self.se_mode not in ("robust", "ordinary"):
            raise ValueError("se_mode must be 'robust' or 'ordinary'")
        if self.model not in ("linear", "logit_outcome"):
            raise ValueError("model must be 'linear' or 'logit_outcome'")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("level must lie in (0, 1)")


def read_dataset_csv(path, y: str, x: str, m: str,
                     controls: Sequence[str] = ()) -> Dataset:
    """Load named columns from a headed CSV; missing values are rejected."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError("CSV file has no header")
        wanted = [y, x, m, *controls]
        missing = [c for c in wanted if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"missing columns: {', '.join(missing)}")
        cols = {c: [] for c in wanted}
        for i, row in enumerate(reader, start=2):
            for c in wanted:
                cell = (row[c] or "").strip()
                if cell == "":
                    raise ValueError(f"missing value in column {c!r}, line {i}")
                try:
                    cols[c].append(float(cell))
                except ValueError:
                    raise ValueError(f"non-numeric value {cell!r} in column {c!r}, line {i}")
    ctrl = None
    if controls:
        ctrl = np.column_stack([cols[c] for c in controls])
    return Dataset(y=np.array(cols[y]), x=np.array(cols[x]), m=np.array(cols[m]),
                   controls=ctrl, names=(y, x, m, *controls))


def residualize(data: Dataset) -> Dataset:
    """Replace y, x, m by residuals on an intercept plus the controls.

    Without controls the dataset passes through unchanged.  Rank-deficient
    control matrices are rejected with the offending columns named.
    """
    if data.controls is None:
        return data
    n = data.n
    q = np.column_stack([np.ones(n), data.controls])
    rank = np.linalg.matrix_rank(q)
    if rank < q.shape[1]:
        bad = _dependent_columns(q, data.names)
        raise ValueError(f"controls are rank deficient: {bad}")
    qt, _ = np.linalg.qr(q)
    proj = lambda v: v - qt @ (qt.T @ v)
    return Dataset(y=proj(data.y), x=proj(data.x), m=proj(data.m),
                   controls=None, names=data.names,
                   n_projected=q.shape[1])


def _dependent_columns(q: np.ndarray, names) -> str:
    labels = ["intercept"]
    if names is not None and len(names) > 3:
        labels += list(names[3:])
    else:
        labels += [f"c{j}" for j in range(1, q.shape[1])]
    bad = []
    for j in range(1, q.shape[1]):
        if np.linalg.matrix_rank(q[:, : j + 1]) <= np.linalg.matrix_rank(q[:, :j]):
            bad.append(labels[j])
    return ", ".join(bad) if bad else "unknown"


def fit_linear(data: Dataset, include_intercept: Optional[bool] = None) -> RegressionFit:
    """Least squares for both equations with classical t-statistics.

    An intercept is included by default for raw data and skipped for data
    that has already been residualized (the projection removed it).
    """
    if data.controls is not None:
        data = residualize(data)
    if include_intercept is None:
        include_intercept = data.n_projected == 0
    y, x, m = data.y, data.x, data.m
    n_proj = data.n_projected
    if include_intercept:
        y = y - y.mean()
        x = x - x.mean()
        m = m - m.mean()
        n_proj += 1
    n = data.n
    df1 = n - 1 - n_proj
    df2 = n - 2 - n_proj
    if df2 <= 0:
        raise ValueError("not enough degrees of freedom")

    s_xx = float(x @ x)
    if s_xx <= 0 or not np.isfinite(s_xx):
        raise ValueError("treatment column is constant after residualization")
    theta1 = float(x @ m) / s_xx
    resid1 = m - theta1 * x
    s11 = float(resid1 @ resid1)

    s_xm = float(x @ m)
    s_mm = float(m @ m)
    det = s_xx * s_mm - s_xm * s_xm
    if det <= 0 or s11 <= 1e-12 * s_mm:
        raise ValueError("x and m are collinear")
    s_xy = float(x @ y)
    s_my = float(m @ y)
    tau = (s_mm * s_xy - s_xm * s_my) / det
    theta2 = (s_xx * s_my - s_xm * s_xy) / det
    resid2 = y - tau * x - theta2 * m
    s22 = float(resid2 @ resid2)

    se1 = math.sqrt(s11 / (df1 * s_xx))
    # [(X'X)^{-1}]_22 for regressors (x, m) equals s_xx / det = 1 / s11
    se2 = math.sqrt(s22 * s_xx / (df2 * det))
    return RegressionFit(
        theta1_hat=theta1, tau_hat=tau, theta2_hat=theta2,
        s_xx=s_xx, s11=s11, s22=s22,
        se1_ordinary=se1, se2_ordinary=se2,
        t1_ordinary=theta1 / se1, t2_ordinary=theta2 / se2,
        df1=df1, df2=df2,
        resid1=resid1, resid2=resid2, x=x, m=m,
    )


def robust_t(data: Dataset, fit: RegressionFit, hc1: bool = False) -> tuple[float, float]:
    """Heteroskedasticity-robust t-statistics from the stacked sandwich.

    Bread is the block-diagonal stacked X'X, meat the outer products of the
    per-observation scores; no finite-sample correction unless hc1.
    """
    x, m = fit.x, fit.m
    u1, u2 = fit.resid1, fit.resid2
    n = len(x)
    bread = np.zeros((3, 3))
    bread[0, 0] = x @ x
    bread[1, 1] = x @ x
    bread[1, 2] = bread[2, 1] = x @ m
    bread[2, 2] = m @ m
    xu1, xu2, mu2 = x * u1, x * u2, m * u2
    meat = np.zeros((3, 3))
    meat[0, 0] = xu1 @ xu1
    meat[0, 1] = meat[1, 0] = xu1 @ xu2
    meat[0, 2] = meat[2, 0] = xu1 @ mu2
    meat[1, 1] = xu2 @ xu2
    meat[1, 2] = meat[2, 1] = xu2 @ mu2
    meat[2, 2] = mu2 @ mu2
    if hc1:
        meat = meat * n / (n - 3)
    try:
        binv = np.linalg.inv(bread)
    except np.linalg.LinAlgError:
        raise ValueError("stacked design matrix is singular")
    cov = binv @ meat @ binv
    if cov[0, 0] <= 0 or cov[2, 2] <= 0:
        raise ValueError("sandwich covariance is not positive definite")
    t1 = fit.theta1_hat / math.sqrt(cov[0, 0])
    t2 = fit.theta2_hat / math.sqrt(cov[2, 2])
    fit.t1_robust, fit.t2_robust = t1, t2
    return t1, t2


def fit_logit_outcome(data: Dataset, *, max_iter: int = 100,
                      grad_tol: float = 1e-10) -> RegressionFit:
    """First equation by least squares, outcome equation by logit likelihood.

    y must be binary.  Newton iterations with step halving; separation is
    flagged once the coefficient norm diverges.  The reported t2 is the Wald
    z-statistic from the inverse observed information.
    """
    if data.controls is not None:
        data = residualize(data)
    y = data.y
    uniq = np.unique(y)
    if not np.all(np.isin(uniq, (0.0, 1.0))):
        raise ValueError("outcome must be coded 0/1 for the logit model")
    if len(uniq) < 2:
        raise ValueError("outcome is constant; the likelihood has no maximum")

    # mediator equation with intercept
    x_c = data.x - data.x.mean()
    m_c = data.m - data.m.mean()
    n = data.n
    s_xx = float(x_c @ x_c)
    if s_xx <= 0:
        raise ValueError("treatment column is constant")
    theta1 = float(x_c @ m_c) / s_xx
    resid1 = m_c - theta1 * x_c
    s11 = float(resid1 @ resid1)
    df1 = n - 2 - data.n_projected
    se1 = math.sqrt(s11 / (df1 * s_xx))

    design = np.column_stack([np.ones(n), data.x, data.m])
    beta = np.zeros(3)
    ll = _logit_loglik(design, y, beta)
    converged = False
    for _ in range(max_iter):
        eta = design @ beta
        p = expit(eta)
        grad = design.T @ (y - p)
        if np.max(np.abs(grad)) <= grad_tol:
            converged = True
            break
        w = p * (1.0 - p)
        hess = design.T @ (design * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise ValueError("logit information matrix is singular (separation?)")
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            ll_new = _logit_loglik(design, y, cand)
            if ll_new >= ll - 1e-12:
                break
            scale *= 0.5
        beta = beta + scale * step
        ll = _logit_loglik(design, y, beta)
        if np.linalg.norm(beta) > 1e3:
            raise ValueError("logit coefficients diverged; data are separated")
    if not converged:
        eta = design @ beta
        grad = design.T @ (y - expit(eta))
        if np.max(np.abs(grad)) > grad_tol:
            raise calibrate.ConvergenceError(
                f"logit did not converge in {max_iter} iterations")
    p = expit(design @ beta)
    w = p * (1.0 - p)
    hess = design.T @ (design * w[:, None])
    cov = np.linalg.inv(hess)
    se2 = math.sqrt(cov[2, 2])
    theta2 = float(beta[2])
    return RegressionFit(
        theta1_hat=theta1, tau_hat=float(beta[1]), theta2_hat=theta2,
        s_xx=s_xx, s11=s11, s22=float("nan"),
        se1_ordinary=se1, se2_ordinary=se2,
        t1_ordinary=theta1 / se1, t2_ordinary=theta2 / se2,
        df1=df1, df2=n - 3 - data.n_projected,
        resid1=resid1, resid2=y - p, x=x_c, m=m_c,
        model="logit_outcome",
    )


def _logit_loglik(design, y, beta):
    eta = design @ beta
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


def _decisions(pt: OrderedPair, alpha: float, table: CriticalTable) -> tuple[dict, RejectionCause]:
    chi = chisq1_quantile(1.0 - alpha)
    cp = CriticalPair(alpha=alpha, chi_alpha=chi, b_alpha=table.b_at(alpha))
    sa, cause = decide_simply_augmented(pt, cp)
    b_bar = calibrate.optimal_b_truncated_value(alpha)
    decisions = {
        "lr": decide_lr(pt, alpha),
        "wald": decide_wald(pt, alpha),
        "simply_augmented": sa,
        "truncated": decide_truncated(pt, alpha, b_bar),
        "exact": None,
    }
    inv = 1.0 / alpha
    if abs(inv - round(inv)) < 1e-9 and round(inv) >= 2:
        decisions["exact"] = decide_exact(pt, build_exact_spec(int(round(inv)) - 2))
    return decisions, cause


def test_from_tstats(t1: float, t2: float, *, alpha: float = 0.05,
                     table: Optional[CriticalTable] = None) -> TestReport:
    """Assemble the full report from a pair of t-statistics."""
    table = table or CriticalTable.default()
    pt = OrderedPair.from_statistics(t1, t2)
    decisions, cause = _decisions(pt, alpha, table)
    return TestReport(
        point=pt, alpha=alpha,
        lr_stat=lr_statistic(t1 * t1, t2 * t2),
        wald_stat=wald_statistic(pt.v1, pt.v2),
        decisions=decisions, rejection_cause=cause,
        p_value=p_value(pt, table),
        t1=t1, t2=t2,
    )


def run_mediation_test(data: Dataset, opts: Optional[MediationOptions] = None) -> TestReport:
    """Estimate, pick the requested t-statistics, and run every decision rule."""
    opts = opts or MediationOptions()
    if opts.model == "logit_outcome":
        fit = fit_logit_outcome(data)
        if opts.se_mode == "robust":
            raise ValueError("robust errors are not available for the logit outcome model")
        t1, t2 = fit.t1_ordinary, fit.t2_ordinary
    else:
        fit = fit_linear(data)
        if opts.se_mode == "robust":
            t1, t2 = robust_t(data, fit)
        else:
            t1, t2 = fit.t1_ordinary, fit.t2_ordinary
    return test_from_tstats(t1, t2, alpha=opts.alpha,
                            table=opts.table or CriticalTable.default())
