"""Reproducible Monte Carlo validation of the rejection probabilities.

Replications are organized into fixed-size blocks, each drawing from its own
counter-based Philox stream keyed by (seed, block index).  Block layout does
not depend on the worker count, and per-test rejection counts are integers
reduced in block order, so campaign output is byte-identical for any number
of workers.

The linear data-generating process matches the two-equation model with a
scale map sigma(x) in {1, |x|, exp(0.4 x)} multiplying both error vectors;
estimation is least squares without intercepts, as in the asymptotic theory.
The logit process adds intercepts (both zero), a binary outcome through a
latent logistic equation, and maximum-likelihood estimation of the outcome
equation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from . import calibrate
from .distributions import chisq1_quantile
from .rules import CriticalTable

__all__ = [
    "SimulationConfig",
    "SimulationResult",
    "draw_errors",
    "theta2_for_lambda",
    "run_campaign",
    "run_sweep",
    "results_to_csv",
]

_ERROR_LAWS = ("normal", "student_t5", "chisq3", "lognormal")
_HETERO_MAPS = ("unit", "abs_x", "exp_04x")
_X_LAWS = ("standard_normal", "dichotomous_balanced")
_TESTS = ("lr", "wald", "simply_augmented", "truncated")

_BLOCK = 4096


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 100
    reps: int = 10_000
    seed: int = 0
    dgp: str = "linear"
    error_law: str = "normal"
    hetero_map: str = "unit"
    theta1: float = 0.0
    theta2: float = 0.0
    tau: float = 0.0
    x_law: str = "standard_normal"
    se_mode: str = "ordinary"
    alpha: float = 0.05
    tests: tuple = ("lr", "simply_augmented")
    b_alpha: Optional[float] = None

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("need at least one replication")
        if self.n < 8:
            raise ValueError("sample size too small")
        if self.dgp not in ("linear", "logit"):
            raise ValueError("dgp must be 'linear' or 'logit'")
        if self.error_law not in _ERROR_LAWS:
            raise ValueError(f"error_law must be one of {_ERROR_LAWS}")
        if self.hetero_map not in _HETERO_MAPS:
            raise ValueError(f"hetero_map must be one of {_HETERO_MAPS}")
        if self.x_law not in _X_LAWS:
            raise ValueError(f"x_law must be one of {_X_LAWS}")
        if self.se_mode not in ("ordinary", "robust"):
            raise ValueError("se_mode must be 'ordinary' or 'robust'")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("level must lie in (0, 1)")
        bad = [t for t in self.tests if t not in _TESTS]
        if bad:
            raise ValueError(f"unknown tests {bad}; choose from {_TESTS}")
        if self.dgp == "logit" and self.se_mode != "ordinary":
            raise ValueError("the logit process reports information-based statistics; "
                             "use se_mode='ordinary'")


@dataclass
class SimulationResult:
    config: SimulationConfig
    counts: dict
    valid_reps: int
    failed_reps: int
    elapsed: float

    @property
    def frequencies(self) -> dict:
        d = max(self.valid_reps, 1)
        return {k: v / d for k, v in self.counts.items()}

    @property
    def standard_errors(self) -> dict:
        d = max(self.valid_reps, 1)
        out = {}
        for k, v in self.counts.items():
            p = v / d
            out[k] = math.sqrt(p * (1.0 - p) / d)
        return out


def draw_errors(law: str, size, rng: np.random.Generator) -> np.ndarray:
    """Disturbances standardized to mean zero, variance one."""
    if law == "normal":
        return rng.standard_normal(size)
    if law == "student_t5":
        return rng.standard_t(5, size) * math.sqrt(3.0 / 5.0)
    if law == "chisq3":
        return (rng.chisquare(3, size) - 3.0) / math.sqrt(6.0)
    if law == "lognormal":
        e = math.e
        return (np.exp(rng.standard_normal(size)) - math.sqrt(e)) / math.sqrt(e * e - e)
    raise ValueError(f"unknown error law {law!r}")


def theta2_for_lambda(lambda2: float, n: int, *, literal: bool = False) -> float:
    """Mediator coefficient giving noncentrality lambda2 at sample size n.

    With unit error variances the parameter-space noncentrality is
    lambda2 = theta2^2 (n - 2), so theta2 = sqrt(lambda2 / (n - 2)).  The
    literal flag instead solves lambda2 = theta2^2 / (n - 2), the other
    reading of the design description; see the README note.
    """
    if n <= 2:
        raise ValueError("need n > 2")
    if lambda2 < 0:
        raise ValueError("noncentrality must be >= 0")
    if literal:
        return math.sqrt(lambda2 * (n - 2))
    return math.sqrt(lambda2 / (n - 2))


def _hetero_scale(map_name: str, x: np.ndarray) -> np.ndarray:
    if map_name == "unit":
        return np.ones_like(x)
    if map_name == "abs_x":
        return np.abs(x)
    return np.exp(0.4 * x)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    key = np.array([seed, block], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _draw_x(cfg: SimulationConfig, rng, cols: int) -> np.ndarray:
    if cfg.x_law == "standard_normal":
        return rng.standard_normal((cfg.n, cols))
    half = cfg.n // 2
    base = np.concatenate([np.zeros(cfg.n - half), np.ones(half)])
    return np.repeat(base[:, None], cols, axis=1)


def _linear_block(cfg: SimulationConfig, block: int, consts: dict) -> np.ndarray:
    """Rejection counts for one block of the linear process."""
    lo = block * _BLOCK
    hi = min(lo + _BLOCK, cfg.reps)
    cols = hi - lo
    rng = _block_rng(cfg.seed, block)
    x = _draw_x(cfg, rng, cols)
    u1 = draw_errors(cfg.error_law, (cfg.n, cols), rng)
    u2 = draw_errors(cfg.error_law, (cfg.n, cols), rng)
    scale = _hetero_scale(cfg.hetero_map, x)
    m = cfg.theta1 * x + scale * u1
    y = cfg.tau * x + cfg.theta2 * m + scale * u2

    n = cfg.n
    sxx = np.einsum("ij,ij->j", x, x)
    sxm = np.einsum("ij,ij->j", x, m)
    smm = np.einsum("ij,ij->j", m, m)
    sxy = np.einsum("ij,ij->j", x, y)
    smy = np.einsum("ij,ij->j", m, y)

    theta1 = sxm / sxx
    r1 = m - theta1 * x
    s11 = np.einsum("ij,ij->j", r1, r1)
    det = sxx * smm - sxm * sxm
    tau = (smm * sxy - sxm * smy) / det
    theta2 = (sxx * smy - sxm * sxy) / det
    r2 = y - tau * x - theta2 * m
    s22 = np.einsum("ij,ij->j", r2, r2)

    if cfg.se_mode == "ordinary":
        t1 = theta1 / np.sqrt(s11 / ((n - 1) * sxx))
        t2 = theta2 / np.sqrt(s22 * sxx / ((n - 2) * det))
    else:
        xr1 = x * r1
        meat1 = np.einsum("ij,ij->j", xr1, xr1)
        t1 = theta1 * sxx / np.sqrt(meat1)
        xr2 = x * r2
        mr2 = m * r2
        m_xx = np.einsum("ij,ij->j", xr2, xr2)
        m_xm = np.einsum("ij,ij->j", xr2, mr2)
        m_mm = np.einsum("ij,ij->j", mr2, mr2)
        var2 = (sxm * sxm * m_xx - 2.0 * sxx * sxm * m_xm + sxx * sxx * m_mm) / det**2
        t2 = theta2 / np.sqrt(var2)

    counts = _count_rejections(t1, t2, cfg, consts)
    counts["__valid"] = cols
    counts["__failed"] = 0
    return _counts_vector(counts, cfg)


def _logit_block(cfg: SimulationConfig, block: int, consts: dict) -> np.ndarray:
    lo = block * _BLOCK
    hi = min(lo + _BLOCK, cfg.reps)
    cols = hi - lo
    rng = _block_rng(cfg.seed, block)
    n = cfg.n
    x = _draw_x(cfg, rng, cols)
    u1 = draw_errors(cfg.error_law, (n, cols), rng)
    unif = rng.random((n, cols))
    eps = np.log(unif) - np.log1p(-unif)

    scale = _hetero_scale(cfg.hetero_map, x)
    m = cfg.theta1 * x + scale * u1
    ystar = cfg.tau * x + cfg.theta2 * m + eps
    y = (ystar > 0.0).astype(float)

    # mediator equation with intercept
    xc = x - x.mean(axis=0)
    mc = m - m.mean(axis=0)
    sxx = np.einsum("ij,ij->j", xc, xc)
    theta1 = np.einsum("ij,ij->j", xc, mc) / sxx
    r1 = mc - theta1 * xc
    s11 = np.einsum("ij,ij->j", r1, r1)
    t1 = theta1 / np.sqrt(s11 / ((n - 2) * sxx))

    t2, ok = _batched_logit_z(x, m, y)
    counts = _count_rejections(t1[ok], t2[ok], cfg, consts)
    counts["__valid"] = int(ok.sum())
    counts["__failed"] = cols - int(ok.sum())
    return _counts_vector(counts, cfg)


def _batched_logit_z(x: np.ndarray, m: np.ndarray, y: np.ndarray,
                     max_iter: int = 60, grad_tol: float = 1e-9):
    """Newton logit fits across the block; returns z-stats and a validity mask."""
    n, cols = x.shape
    beta = np.zeros((cols, 3))
    alive = np.ones(cols, dtype=bool)
    degenerate = (y.sum(axis=0) == 0) | (y.sum(axis=0) == n)
    alive &= ~degenerate
    for _ in range(max_iter):
        eta = beta[:, 0] + x * beta[:, 1] + m * beta[:, 2]
        p = expit(eta)
        res = y - p
        g0 = res.sum(axis=0)
        g1 = np.einsum("ij,ij->j", x, res)
        g2 = np.einsum("ij,ij->j", m, res)
        gmax = np.maximum(np.abs(g0), np.maximum(np.abs(g1), np.abs(g2)))
        todo = alive & (gmax > grad_tol)
        if not todo.any():
            break
        w = p * (1.0 - p)
        h = np.empty((cols, 3, 3))
        h[:, 0, 0] = w.sum(axis=0)
        h[:, 0, 1] = h[:, 1, 0] = np.einsum("ij,ij->j", w, x)
        h[:, 0, 2] = h[:, 2, 0] = np.einsum("ij,ij->j", w, m)
        h[:, 1, 1] = np.einsum("ij,ij,ij->j", w, x, x)
        h[:, 1, 2] = h[:, 2, 1] = np.einsum("ij,ij,ij->j", w, x, m)
        h[:, 2, 2] = np.einsum("ij,ij,ij->j", w, m, m)
        grad = np.stack([g0, g1, g2], axis=1)
        idx = np.nonzero(todo)[0]
        try:
            step = np.linalg.solve(h[idx], grad[idx])
        except np.linalg.LinAlgError:
            step = np.zeros((len(idx), 3))
            for j, k in enumerate(idx):
                try:
                    step[j] = np.linalg.solve(h[k], grad[k])
                except np.linalg.LinAlgError:
                    alive[k] = False
        beta[idx] += step
        blown = np.linalg.norm(beta, axis=1) > 1e3
        alive &= ~blown
    eta = beta[:, 0] + x * beta[:, 1] + m * beta[:, 2]
    p = expit(eta)
    res = y - p
    g0 = res.sum(axis=0)
    g1 = np.einsum("ij,ij->j", x, res)
    g2 = np.einsum("ij,ij->j", m, res)
    gmax = np.maximum(np.abs(g0), np.maximum(np.abs(g1), np.abs(g2)))
    alive &= gmax <= 1e-6
    w = p * (1.0 - p)
    h22 = np.einsum("ij,ij,ij->j", w, m, m)
    h = np.empty((cols, 3, 3))
    h[:, 0, 0] = w.sum(axis=0)
    h[:, 0, 1] = h[:, 1, 0] = np.einsum("ij,ij->j", w, x)
    h[:, 0, 2] = h[:, 2, 0] = np.einsum("ij,ij->j", w, m)
    h[:, 1, 1] = np.einsum("ij,ij,ij->j", w, x, x)
    h[:, 1, 2] = h[:, 2, 1] = np.einsum("ij,ij,ij->j", w, x, m)
    h[:, 2, 2] = h22
    z = np.full(cols, np.nan)
    idx = np.nonzero(alive)[0]
    if len(idx):
        try:
            inv = np.linalg.inv(h[idx])
            z[idx] = beta[idx, 2] / np.sqrt(inv[:, 2, 2])
        except np.linalg.LinAlgError:
            for k in idx:
                try:
                    z[k] = beta[k, 2] / math.sqrt(np.linalg.inv(h[k])[2, 2])
                except np.linalg.LinAlgError:
                    alive[k] = False
    return z, alive


def _count_rejections(t1, t2, cfg: SimulationConfig, consts: dict) -> dict:
    f1, f2 = t1 * t1, t2 * t2
    v1 = np.minimum(f1, f2)
    v2 = np.maximum(f1, f2)
    chi = consts["chi2"]
    ratio = np.divide(v1, v2, out=np.zeros_like(v1), where=v2 > 0)
    out = {}
    for test in cfg.tests:
        if test == "lr":
            rej = v1 > chi
        elif test == "wald":
            w = np.divide(v1 * v2, v1 + v2, out=np.zeros_like(v1), where=(v1 + v2) > 0)
            rej = w > chi
        elif test == "simply_augmented":
            rej = (v1 > chi) | (ratio > consts["b"])
        else:
            rej = (v1 > chi) | ((ratio > consts["b_bar"]) & (v2 < chi))
        out[test] = int(np.count_nonzero(rej))
    return out


def _counts_vector(counts: dict, cfg: SimulationConfig) -> np.ndarray:
    keys = list(cfg.tests) + ["__valid", "__failed"]
    return np.array([counts[k] for k in keys], dtype=np.int64)


def _run_block(args) -> np.ndarray:
    cfg, block, consts = args
    if cfg.dgp == "linear":
        return _linear_block(cfg, block, consts)
    return _logit_block(cfg, block, consts)


def _consts_for(cfg: SimulationConfig) -> dict:
    consts = {"chi2": chisq1_quantile(1.0 - cfg.alpha)}
    if "simply_augmented" in cfg.tests:
        if cfg.b_alpha is not None:
            consts["b"] = cfg.b_alpha
        else:
            consts["b"] = CriticalTable.default().b_at(cfg.alpha)
    if "truncated" in cfg.tests:
        consts["b_bar"] = calibrate.optimal_b_truncated_value(cfg.alpha)
    return consts


def run_campaign(cfg: SimulationConfig, workers: int = 1) -> SimulationResult:
    """Run every replication block and reduce the integer rejection counts.

    Deterministic for a fixed config: the block layout, the per-block Philox
    keys, and the reduction order are all independent of `workers`.
    """
    start = time.perf_counter()
    consts = _consts_for(cfg)
    blocks = list(range((cfg.reps + _BLOCK - 1) // _BLOCK))
    jobs = [(cfg, b, consts) for b in blocks]
    if workers > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, jobs, chunksize=1))
    else:
        parts = [_run_block(j) for j in jobs]
    total = np.sum(parts, axis=0) if parts else np.zeros(len(cfg.tests) + 2, dtype=np.int64)
    counts = {t: int(total[i]) for i, t in enumerate(cfg.tests)}
    valid = int(total[len(cfg.tests)])
    failed = int(total[len(cfg.tests) + 1])
    return SimulationResult(config=cfg, counts=counts, valid_reps=valid,
                            failed_reps=failed, elapsed=time.perf_counter() - start)


def run_sweep(base: SimulationConfig, theta2_values, workers: int = 1) -> list:
    """Campaigns across a grid of mediator coefficients, common draws."""
    results = []
    for th in theta2_values:
        results.append(run_campaign(replace(base, theta2=float(th)), workers=workers))
    return results


def results_to_csv(results, path_or_buf) -> None:
    """One CSV row per (test, config) cell, full-precision frequencies."""
    import csv

    close = False
    if isinstance(path_or_buf, (str, bytes)):
        buf = open(path_or_buf, "w", newline="")
        close = True
    else:
        buf = path_or_buf
    try:
        w = csv.writer(buf)
        w.writerow(["test", "dgp", "n", "error_law", "hetero_map", "x_law",
                    "se_mode", "alpha", "theta1", "theta2", "tau", "seed",
                    "reps", "valid", "failed", "rejections", "frequency", "se"])
        for res in results:
            cfg = res.config
            for test in cfg.tests:
                w.writerow([
                    test, cfg.dgp, cfg.n, cfg.error_law, cfg.hetero_map,
                    cfg.x_law, cfg.se_mode, repr(cfg.alpha), repr(cfg.theta1),
                    repr(cfg.theta2), repr(cfg.tau), cfg.seed, cfg.reps,
                    res.valid_reps, res.failed_reps, res.counts[test],
                    repr(res.frequencies[test]), repr(res.standard_errors[test]),
                ])
    finally:
        if close:
            buf.close()
