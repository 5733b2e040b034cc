"""Scalar distribution kernel: standard normal and noncentral chi-square.

Everything downstream (region probabilities, rejection curves, calibration)
reduces to the noncentral chi-square with one degree of freedom.  Its CDF is
computed through the normal-CDF difference

    G(v; lam) = Phi(sqrt(v) - sqrt(lam)) - Phi(-sqrt(v) - sqrt(lam)),

which is uniformly accurate for small and large noncentrality, unlike the
Poisson-mixture series (kept only as a test oracle).  Log-space variants are
provided for noncentralities where the plain CDF underflows double precision.

All functions are pure, accept scalars or arrays, and are safe for concurrent
use.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln, log_ndtr, ndtr, ndtri

__all__ = [
    "norm_pdf",
    "norm_cdf",
    "norm_sf",
    "log_norm_sf",
    "nc_chisq1_cdf",
    "log_nc_chisq1_cdf",
    "nc_chisq_pdf",
    "nc_chisq1_pdf_dlambda",
    "chisq1_quantile",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _maybe_scalar(x):
    """Return a Python float for 0-d results, the array otherwise."""
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def norm_pdf(x):
    """Standard normal density phi(x)."""
    x = np.asarray(x, dtype=float)
    return _maybe_scalar(np.exp(-0.5 * x * x) / _SQRT_2PI)


def norm_cdf(x):
    """Standard normal CDF Phi(x)."""
    return _maybe_scalar(ndtr(np.asarray(x, dtype=float)))


def norm_sf(x):
    """Upper tail 1 - Phi(x), computed without cancellation."""
    return _maybe_scalar(ndtr(-np.asarray(x, dtype=float)))


def log_norm_sf(x):
    """log(1 - Phi(x)), finite far beyond the double-precision tail."""
    return _maybe_scalar(log_ndtr(-np.asarray(x, dtype=float)))


def _check_lambda(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("noncentrality must be finite and >= 0")
    return lam


def nc_chisq1_cdf(v, lam=0.0):
    """CDF of the noncentral chi-square with 1 dof and noncentrality lam.

    Uses G(v; lam) = Phi(r - s) - Phi(-r - s) with r = sqrt(v), s = sqrt(lam).
    Both terms are lower tails, so the difference keeps full relative
    precision in the decaying regime (lam >> v) down to the double-precision
    floor; below that use :func:`log_nc_chisq1_cdf`.
    """
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("chi-square argument must be >= 0")
    s = np.sqrt(_check_lambda(lam))
    r = np.sqrt(v)
    return _maybe_scalar(ndtr(r - s) - ndtr(-r - s))


def log_nc_chisq1_cdf(v, lam=0.0):
    """log G(v; lam), usable for noncentralities far past double underflow."""
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValueError("log CDF requires v > 0")
    s = np.sqrt(_check_lambda(lam))
    r = np.sqrt(v)
    # log(Phi(r-s) - Phi(-r-s)) = log Phi(r-s) + log1p(-Phi(-r-s)/Phi(r-s))
    la = log_ndtr(r - s)
    lb = log_ndtr(-r - s)
    return _maybe_scalar(la + np.log1p(-np.exp(lb - la)))


def _pdf_dof1(v, s):
    """Noncentral chi-square(1) density at v > 0, s = sqrt(lam)."""
    r = np.sqrt(v)
    return (norm_pdf(r - s) + norm_pdf(r + s)) / (2.0 * r)


def _pdf_dof3(v, s):
    """Noncentral chi-square(3) density at v > 0, s = sqrt(lam).

    (phi(r-s) - phi(r+s)) / (2 s); the s -> 0 limit r*phi(r) is taken through
    a Hermite expansion to keep full precision near the central case.
    """
    v = np.asarray(v, dtype=float)
    s = np.asarray(s, dtype=float)
    r = np.sqrt(v)
    small = s < 1e-3
    s_safe = np.where(small, 1.0, s)
    direct = (norm_pdf(r - s) - norm_pdf(r + s)) / (2.0 * s_safe)
    r2 = r * r
    series = norm_pdf(r) * (
        r
        + (r2 - 3.0) * r * s * s / 6.0
        + (r2 * r2 - 10.0 * r2 + 15.0) * r * s**4 / 120.0
    )
    return np.where(small, series, direct)


def _log_central_chisq_pdf(v, k):
    """log of the central chi-square density with k dof at v > 0."""
    return -0.5 * k * math.log(2.0) - gammaln(0.5 * k) - 0.5 * v + (0.5 * k - 1.0) * np.log(v)


def _pdf_general(v, lam, kappa):
    """Poisson-mixture density for general integer dof, summed in log space."""
    out = np.zeros_like(v)
    half = 0.5 * lam
    for i, vi in np.ndenumerate(v):
        if lam == 0.0:
            out[i] = math.exp(_log_central_chisq_pdf(vi, kappa))
            continue
        j_mode = max(int(half), 0)
        total = 0.0
        log_peak = None
        for direction in (1, -1):
            j = j_mode if direction == 1 else j_mode - 1
            while j >= 0:
                log_term = (
                    -half
                    + j * math.log(half)
                    - gammaln(j + 1)
                    + _log_central_chisq_pdf(vi, kappa + 2 * j)
                )
                if log_peak is None:
                    log_peak = log_term
                total += math.exp(log_term - log_peak)
                if log_term < log_peak - 40.0:
                    break
                j += direction
        out[i] = total * math.exp(log_peak)
    return out


def nc_chisq_pdf(v, lam=0.0, kappa=1):
    """Noncentral chi-square density with integer dof kappa.

    dof 1 and 3 use closed normal-density forms; other dof fall back to the
    Poisson-mixture sum.  For kappa = 1 the density diverges at v = 0 and
    +inf is returned there.
    """
    if int(kappa) != kappa or kappa < 1:
        raise ValueError("dof must be a positive integer")
    kappa = int(kappa)
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("chi-square argument must be >= 0")
    lam_arr = _check_lambda(lam)
    s = np.sqrt(lam_arr)

    at_zero = v == 0.0
    v_safe = np.where(at_zero, 1.0, v)
    if kappa == 1:
        dens = _pdf_dof1(v_safe, s)
        fill = np.inf
    elif kappa == 3:
        dens = _pdf_dof3(v_safe, s)
        fill = 0.0
    else:
        if np.ndim(lam_arr) != 0:
            raise ValueError("general dof supports scalar noncentrality only")
        dens = _pdf_general(np.atleast_1d(v_safe), float(lam_arr), kappa)
        dens = dens.reshape(np.shape(v_safe))
        # only the j = 0 mixture term is nonzero at the origin
        fill = 0.5 * math.exp(-0.5 * float(lam_arr)) if kappa == 2 else 0.0
    return _maybe_scalar(np.where(at_zero, fill, dens))


def nc_chisq1_pdf_dlambda(v, lam):
    """d/dlam of the dof-1 density: (g3(v; lam) - g1(v; lam)) / 2."""
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValueError("derivative requires v > 0")
    s = np.sqrt(_check_lambda(lam))
    return _maybe_scalar(0.5 * (_pdf_dof3(v, s) - _pdf_dof1(v, s)))


def chisq1_quantile(p):
    """Quantile of the central chi-square with 1 dof.

    Inverts G(v) = 2 Phi(sqrt(v)) - 1 exactly: v = ndtri((1 + p) / 2)^2.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or np.any(p >= 1):
        raise ValueError("probability must lie in (0, 1)")
    return _maybe_scalar(ndtri(0.5 * (1.0 + p)) ** 2)
