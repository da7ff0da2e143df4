"""Anderson-Darling statistic, point estimators and the KS distance to uniform.

The batched helpers (``*_batch``) work on a 2-d array of replicate samples,
one sample per row; the harness relies on them to keep replicate loops in
numpy.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .distributions import (GammaParams, GpdParams, _gamma_cdf, _gpd_cdf,
                            _gpd_inside, _gpd_logpdf, as_sample)
from .errors import EstimationError

AD_EPS = 1e-12


class FailReason(enum.Enum):
    NON_CONVERGENCE = "non-convergence"
    BOUNDARY = "boundary"
    NON_FINITE_OBJECTIVE = "non-finite-objective"


class FitError(EstimationError):
    """Point estimation failed; ``reason`` is a :class:`FailReason`."""

    def __init__(self, reason: FailReason, message: str = ""):
        self.reason = reason
        super().__init__(message or f"fit failed: {reason.value}")


# ---------------------------------------------------------------------------
# Anderson-Darling

def _ad_from_cdf(u: np.ndarray) -> np.ndarray:
    """A^2 along the last axis of clamped CDF values (any order)."""
    u = np.sort(u, axis=-1)
    n = u.shape[-1]
    w = (2.0 * np.arange(1, n + 1) - 1.0) / n
    terms = np.log(u) + np.log1p(-u[..., ::-1])
    return -n - np.sum(w * terms, axis=-1)


def ad_from_cdf_values(u, outside=None) -> np.ndarray:
    """A^2 per row from CDF values.

    Rows with any point flagged in ``outside`` get +inf. Remaining values are
    clamped to [AD_EPS, 1 - AD_EPS].
    """
    u = np.asarray(u, dtype=float)
    a2 = _ad_from_cdf(np.clip(u, AD_EPS, 1.0 - AD_EPS))
    if outside is not None:
        a2 = np.where(np.any(outside, axis=-1), np.inf, a2)
    return a2


def anderson_darling(sample, cdf, support=None) -> float:
    """Anderson-Darling A^2 of ``sample`` against the continuous ``cdf``.

    Parameters
    ----------
    sample : array_like
        Observations, at least one.
    cdf : callable
        Vectorized CDF of the hypothesized distribution.
    support : tuple of float, optional
        Open support interval ``(lo, hi)``. Points outside it make the
        statistic +inf. Without it, any CDF value of exactly 0 or 1 is
        treated as an out-of-support point.

    Returns
    -------
    float
        A^2, or +inf for samples outside the support.
    """
    x = np.asarray(sample, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("anderson_darling needs a non-empty 1-d sample")
    u = np.asarray(cdf(x), dtype=float)
    if support is None:
        outside = (u <= 0.0) | (u >= 1.0)
    else:
        lo, hi = support
        outside = (x <= lo) | (x >= hi)
    return float(ad_from_cdf_values(u, outside))


def ad_statistic(sample, params) -> float:
    """A^2 of ``sample`` against a fully specified Gamma or GPD."""
    if isinstance(params, GammaParams):
        return float(ad_batch_gamma(np.asarray(sample, float)[None, :],
                                    np.array([params.alpha]), np.array([params.lam]))[0])
    if isinstance(params, GpdParams):
        return float(ad_batch_gpd(np.asarray(sample, float)[None, :],
                                  np.array([params.gamma]), np.array([params.sigma]))[0])
    raise TypeError(f"unsupported parameter type {type(params).__name__}")


def ad_batch_gamma(X, alpha, lam) -> np.ndarray:
    """A^2 for each row of ``X`` against Gamma(alpha[i], lam[i])."""
    X = np.asarray(X, dtype=float)
    alpha = np.asarray(alpha, dtype=float)[..., None]
    lam = np.asarray(lam, dtype=float)[..., None]
    return ad_from_cdf_values(_gamma_cdf(X, alpha, lam), X <= 0)


def ad_batch_gpd(X, gamma, sigma) -> np.ndarray:
    """A^2 for each row of ``X`` against GPD(gamma[i], sigma[i])."""
    X = np.asarray(X, dtype=float)
    g = np.asarray(gamma, dtype=float)[..., None]
    s = np.asarray(sigma, dtype=float)[..., None]
    return ad_from_cdf_values(_gpd_cdf(X, g, s), ~_gpd_inside(X, g, s))


# ---------------------------------------------------------------------------
# Gamma: method of moments

def mom_gamma_batch(X):
    """Moment estimates per row.

    Returns ``(alpha, lam, ok)``; rows with zero variance have ``ok`` False
    and nan estimates.
    """
    X = np.asarray(X, dtype=float)
    xbar = X.mean(axis=-1)
    v = X.var(axis=-1, ddof=1)
    ok = (v > 0) & np.isfinite(v) & (xbar > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(ok, xbar * xbar / v, np.nan)
        lam = np.where(ok, xbar / v, np.nan)
    return alpha, lam, ok


def mom_gamma(sample) -> GammaParams:
    """Method-of-moments Gamma fit: alpha = xbar^2/v, lam = xbar/v (v with n-1).

    Raises
    ------
    FitError
        With reason BOUNDARY for a zero-variance sample.
    """
    x = as_sample(sample)
    if x.size < 2:
        raise ValueError("mom_gamma needs at least 2 observations")
    if np.any(x <= 0):
        raise ValueError("Gamma data must be positive")
    alpha, lam, ok = mom_gamma_batch(x[None, :])
    if not ok[0]:
        raise FitError(FailReason.BOUNDARY, "zero sample variance")
    return GammaParams(float(alpha[0]), float(lam[0]))


# ---------------------------------------------------------------------------
# GPD: maximum likelihood
#
# With theta = gamma/sigma the likelihood maximised over gamma for fixed theta
# has gamma(theta) = mean(log(1 + theta x)), so ML reduces to a 1-d search of
#   l(theta) = -n [log(gamma(theta)/theta) + 1 + gamma(theta)]
# over theta > -1/max(x). The search runs on v = log(1 + theta max(x)), which
# maps the admissible range onto the real line; l -> +inf as v -> -inf (the
# gamma < -1 degeneracy), so the ML estimate is the best interior local
# maximum.

_V_GRID = np.linspace(-18.0, 8.0, 48)
_GOLDEN_ITERS = 48
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
ML_TOL = 1e-8


def _gpd_profile(X, xmax, v):
    """Profile log-likelihood at v (shape (B, K)); returns (loglik, gamma, sigma)."""
    theta = np.expm1(v) / xmax[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.log1p(theta[:, :, None] * X[:, None, :])
        g = z.mean(axis=-1)
        small = np.abs(theta) * xmax[:, None] < 1e-10
        # sigma = g/theta -> mean(x) as theta -> 0
        s = np.where(small, X.mean(axis=-1)[:, None], g / np.where(small, 1.0, theta))
        ll = -X.shape[-1] * (np.log(s) + 1.0 + g)
    ll = np.where(np.isfinite(ll), ll, -np.inf)
    return ll, g, s


def ml_gpd_batch(X):
    """ML fits of the GPD for each row of ``X``.

    Returns
    -------
    gamma, sigma : ndarray
        Estimates (nan where the fit failed).
    reason : ndarray of object
        None for a successful fit, otherwise a :class:`FailReason`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    B = X.shape[0]
    xmax = X.max(axis=-1)
    reason = np.full(B, None, dtype=object)

    ll, _, _ = _gpd_profile(X, xmax, np.broadcast_to(_V_GRID, (B, _V_GRID.size)))
    finite = np.isfinite(ll)
    reason[~finite.any(axis=-1)] = FailReason.NON_FINITE_OBJECTIVE

    mid = ll[:, 1:-1]
    is_peak = (mid >= ll[:, :-2]) & (mid >= ll[:, 2:]) & np.isfinite(mid)
    # constant data: the profile is monotone, no interior maximum
    degenerate = X.var(axis=-1) <= 0
    peak_ll = np.where(is_peak, mid, -np.inf)
    k = np.argmax(peak_ll, axis=-1) + 1
    has_peak = is_peak.any(axis=-1) & ~degenerate
    reason[(reason == None) & ~has_peak] = FailReason.BOUNDARY  # noqa: E711

    # golden-section refinement inside [v[k-1], v[k+1]]
    a = _V_GRID[np.clip(k - 1, 0, _V_GRID.size - 1)]
    b = _V_GRID[np.clip(k + 1, 0, _V_GRID.size - 1)]
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc = _gpd_profile(X, xmax, c[:, None])[0][:, 0]
    fd = _gpd_profile(X, xmax, d[:, None])[0][:, 0]
    for _ in range(_GOLDEN_ITERS):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new = np.where(left, b - _INV_PHI * (b - a), a + _INV_PHI * (b - a))
        fnew = _gpd_profile(X, xmax, new[:, None])[0][:, 0]
        c, d, fc, fd = (np.where(left, new, d), np.where(left, c, new),
                        np.where(left, fnew, fd), np.where(left, fc, fnew))
    v_hat = np.where(fc >= fd, c, d)
    ll_hat, g_hat, s_hat = (arr[:, 0] for arr in _gpd_profile(X, xmax, v_hat[:, None]))

    ll_k = ll[np.arange(B), k]
    spread = np.abs(fc - fd)
    stalled = ~np.isfinite(ll_hat) | (ll_hat < ll_k - ML_TOL) | (spread > ML_TOL * (1.0 + np.abs(ll_hat)))
    ok = reason == None  # noqa: E711
    reason[ok & stalled] = FailReason.NON_CONVERGENCE
    ok = reason == None  # noqa: E711
    reason[ok & (g_hat <= -1.0)] = FailReason.BOUNDARY

    ok = reason == None  # noqa: E711
    gamma = np.where(ok, g_hat, np.nan)
    sigma = np.where(ok, s_hat, np.nan)
    return gamma, sigma, reason


def ml_gpd(sample) -> GpdParams:
    """Maximum-likelihood GPD fit.

    Raises
    ------
    FitError
        When no interior likelihood maximum exists (BOUNDARY), the search
        fails to settle (NON_CONVERGENCE), or the likelihood is nowhere
        finite (NON_FINITE_OBJECTIVE).
    """
    x = as_sample(sample)
    if x.size < 2:
        raise ValueError("ml_gpd needs at least 2 observations")
    if np.any(x <= 0):
        raise ValueError("GPD excesses must be positive")
    g, s, reason = ml_gpd_batch(x[None, :])
    if reason[0] is not None:
        raise FitError(reason[0])
    return GpdParams(float(g[0]), float(s[0]))


def gpd_loglik(sample, p: GpdParams) -> float:
    """GPD log-likelihood of ``sample``; -inf if any point is off the support."""
    return float(np.sum(_gpd_logpdf(np.asarray(sample, float), p.gamma, p.sigma)))


# ---------------------------------------------------------------------------

def ks_distance(values) -> float:
    """Sup distance between the empirical CDF of ``values`` and Uniform(0, 1)."""
    u = np.sort(np.asarray(values, dtype=float))
    m = u.size
    if m == 0:
        raise ValueError("ks_distance of an empty sequence")
    if np.any((u < 0) | (u > 1)):
        raise ValueError("values must lie in [0, 1]")
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - u), np.max(u - (i - 1) / m)))
