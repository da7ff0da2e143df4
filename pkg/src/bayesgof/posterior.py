"""Posterior samplers under the MDI prior.

Gamma: alpha from its marginal posterior by grid inverse-CDF, then
lam | alpha ~ Gamma(n alpha + 2, rate sum(x)).

GPD: random-walk Metropolis-Hastings on (gamma, log sigma).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Union

import numba
import numpy as np
from scipy import special

from .distributions import GammaParams, GpdParams, as_sample
from .statistics import FitError, ml_gpd

# alpha grid: search range on log(alpha), span and resolution
LOG_ALPHA_MIN = math.log(1e-3)
LOG_ALPHA_MAX = math.log(1e6)
GRID_DROP = 40.0
GRID_SIZE = 2048
COARSE_SIZE = 256


@dataclass(frozen=True)
class GammaSuffStats:
    n: int
    sum_x: float
    sum_log_x: float

    @classmethod
    def from_sample(cls, sample) -> "GammaSuffStats":
        x = as_sample(sample)
        if np.any(x <= 0):
            raise ValueError("Gamma data must be positive")
        return cls(x.size, float(x.sum()), float(np.log(x).sum()))


@dataclass(frozen=True)
class MhConfig:
    """Random-walk MH settings for the GPD posterior.

    ``init`` is either a :class:`GpdParams` or None, meaning start at the ML
    fit when it exists and at (gamma=0, sigma=mean(x)) otherwise.
    """

    sd_gamma: float = 0.05
    sd_log_sigma: float = 0.1
    burn_in: int = 1000
    thin: int = 5
    init: GpdParams | None = None

    def __post_init__(self):
        if not self.sd_gamma > 0 or not self.sd_log_sigma > 0:
            raise ValueError("proposal standard deviations must be positive")
        if self.burn_in < 0 or self.thin < 1:
            raise ValueError("burn_in must be >= 0 and thin >= 1")


@dataclass
class PosteriorDraws:
    """Posterior draws, one parameter vector per row of ``values``.

    Columns are (alpha, lam) for ``family == "gamma"`` and (gamma, sigma) for
    ``family == "gpd"``.
    """

    family: str
    values: np.ndarray
    acceptance_rate: float | None = None

    def __len__(self):
        return self.values.shape[0]

    def __iter__(self) -> Iterator[Union[GammaParams, GpdParams]]:
        cls = GammaParams if self.family == "gamma" else GpdParams
        for a, b in self.values:
            yield cls(float(a), float(b))

    def mean(self) -> Union[GammaParams, GpdParams]:
        cls = GammaParams if self.family == "gamma" else GpdParams
        a, b = self.values.mean(axis=0)
        return cls(float(a), float(b))


# ---------------------------------------------------------------------------
# Gamma

def _alpha_ln_marginal(alpha, n, sum_x, sum_log_x):
    alpha = np.asarray(alpha, dtype=float)
    psi = special.psi(alpha)
    na2 = n * alpha + 2.0
    out = (-(n + 1) * special.gammaln(alpha)
           + alpha * (sum_log_x + psi - 1.0) - psi
           + special.gammaln(na2) - na2 * np.log(sum_x))
    return np.where(np.isfinite(out), out, -np.inf)


def gamma_alpha_ln_marginal(alpha, ss: GammaSuffStats):
    """Unnormalized log p(alpha | x) under the MDI prior."""
    out = _alpha_ln_marginal(alpha, ss.n, ss.sum_x, ss.sum_log_x)
    return float(out) if np.ndim(out) == 0 else out


def _log_alpha_density(t, n, sx, slx):
    # density of t = log(alpha), including the Jacobian alpha
    return _alpha_ln_marginal(np.exp(t), n, sx, slx) + t


def _golden(f, lo, hi, iters=60):
    """Vectorized golden-section search for a maximum of f on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo.copy(), hi.copy()
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new = np.where(left, b - invphi * (b - a), a + invphi * (b - a))
        fnew = f(new)
        c, d, fc, fd = (np.where(left, new, d), np.where(left, c, new),
                        np.where(left, fnew, fd), np.where(left, fc, fnew))
    t = np.where(fc >= fd, c, d)
    return t, f(t)


def _bisect_drop(f, inside, outside, level, iters=60):
    # f(inside) > level >= f(outside): locate the crossing
    a, b = inside.copy(), outside.copy()
    for _ in range(iters):
        m = 0.5 * (a + b)
        above = f(m) > level
        a = np.where(above, m, a)
        b = np.where(above, b, m)
    return b


def _alpha_support(f, B):
    """Interior mode of the log(alpha) density and the antimode to its left.

    The MDI prior grows like exp(1/alpha) as alpha -> 0, so the density has a
    non-integrable spike at the origin, separated from the bulk by a valley.
    The posterior is taken as the density restricted to the right of that
    valley.
    """
    tc = np.linspace(LOG_ALPHA_MIN, LOG_ALPHA_MAX, COARSE_SIZE)
    gc = f(np.broadcast_to(tc, (B, COARSE_SIZE)))
    mid = gc[:, 1:-1]
    peak = (mid >= gc[:, :-2]) & (mid >= gc[:, 2:]) & np.isfinite(mid)
    ok = peak.any(axis=1)
    k = np.argmax(np.where(peak, mid, -np.inf), axis=1) + 1
    # lowest point left of the mode
    left = np.where(np.arange(COARSE_SIZE) <= k[:, None], gc, np.inf)
    j = np.argmin(left, axis=1)
    step = tc[1] - tc[0]
    t_mode, g_mode = _golden(f, tc[k] - step, tc[k] + step)
    neg = lambda t: -f(t)  # noqa: E731
    jl = np.maximum(j - 1, 0)
    jr = np.minimum(j + 1, k)
    t_anti, _ = _golden(neg, tc[jl], tc[jr])
    t_anti = np.where(j == 0, LOG_ALPHA_MIN, t_anti)
    return t_mode, g_mode, t_anti, ok


def alpha_grid(n, sum_x, sum_log_x, size=GRID_SIZE):
    """Grid on log(alpha) and its normalized CDF, one row per sample.

    The mode of the log(alpha) density is located by golden-section search;
    the grid extends to where the log density is ``GRID_DROP`` nats below
    the mode (never past the antimode on the left) and is normalized by the
    trapezoidal rule.

    Returns
    -------
    t : ndarray, shape (B, size)
        Grid points in log(alpha).
    cdf : ndarray, shape (B, size)
        Cumulative probabilities at ``t`` (0 at the first point, 1 at the last).
    ok : ndarray of bool, shape (B,)
        False where the density has no interior mode.
    """
    sx = np.atleast_1d(np.asarray(sum_x, dtype=float))
    slx = np.atleast_1d(np.asarray(sum_log_x, dtype=float))
    B = sx.size

    def f(t):
        t = np.asarray(t)
        shape = (B,) + (1,) * (t.ndim - 1)
        return _log_alpha_density(t, n, sx.reshape(shape), slx.reshape(shape))

    t_mode, g_mode, t_anti, ok = _alpha_support(f, B)
    level = g_mode - GRID_DROP
    hi = np.full(B, LOG_ALPHA_MAX)
    t_lo = np.where(f(t_anti) > level, t_anti, _bisect_drop(f, t_mode, t_anti, level))
    t_hi = np.where(f(hi) > level, hi, _bisect_drop(f, t_mode, hi, level))
    frac = np.linspace(0.0, 1.0, size)
    t = t_lo[:, None] + (t_hi - t_lo)[:, None] * frac
    g = f(t)
    w = np.exp(g - g.max(axis=1, keepdims=True))
    dt = (t_hi - t_lo)[:, None] / (size - 1)
    cum = np.concatenate([np.zeros((B, 1)),
                          np.cumsum(0.5 * (w[:, 1:] + w[:, :-1]) * dt, axis=1)], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cdf = cum / cum[:, -1:]
    ok = ok & np.isfinite(cdf).all(axis=1)
    return t, cdf, ok


def _inverse_cdf_rows(t, cdf, u):
    """Linear-interpolation inverse CDF applied row-wise: u has shape (B, K)."""
    B, G = t.shape
    K = u.shape[1]
    # offset rows so that one flat searchsorted serves all of them
    off = 2.0 * np.arange(B)[:, None]
    flat = (cdf + off).ravel()
    pos = np.searchsorted(flat, (u + off).ravel(), side="right").reshape(B, K)
    base = np.arange(B)[:, None] * G
    j = np.clip(pos - base, 1, G - 1)
    rows = np.arange(B)[:, None]
    c0, c1 = cdf[rows, j - 1], cdf[rows, j]
    t0, t1 = t[rows, j - 1], t[rows, j]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(c1 > c0, (u - c0) / (c1 - c0), 0.5)
    return t0 + w * (t1 - t0)


def _draw_lambda(alpha, n, sum_x, rng):
    return rng.gamma(n * alpha + 2.0, 1.0 / sum_x)


def sample_gamma_lambda(alpha, ss: GammaSuffStats, size, rng: np.random.Generator) -> np.ndarray:
    """Draws of lam | alpha, x ~ Gamma(n alpha + 2, rate sum(x))."""
    return _draw_lambda(np.broadcast_to(float(alpha), size), ss.n, ss.sum_x, rng)


def sample_gamma_posterior_batch(X, K, rng: np.random.Generator, grid_size=GRID_SIZE):
    """K posterior draws of (alpha, lam) for each row of X.

    Returns ``(draws, ok)`` with draws of shape (B, K, 2); rows where
    ``ok`` is False (zero variance, no interior mode) are nan.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[1]
    sx = X.sum(axis=1)
    slx = np.log(X).sum(axis=1)
    t, cdf, ok = alpha_grid(n, sx, slx, grid_size)
    ok &= X.var(axis=1) > 0
    cdf = np.where(ok[:, None], cdf, np.linspace(0.0, 1.0, t.shape[1]))
    u = rng.random((X.shape[0], K))
    alpha = np.exp(_inverse_cdf_rows(t, cdf, u))
    lam = _draw_lambda(alpha, n, sx[:, None], rng)
    draws = np.stack([alpha, lam], axis=-1)
    draws[~ok] = np.nan
    return draws, ok


def sample_gamma_posterior(sample, N: int, rng: np.random.Generator) -> PosteriorDraws:
    """N i.i.d. draws from p(alpha, lam | x) under the MDI prior."""
    x = as_sample(sample)
    if N < 1:
        raise ValueError("N must be at least 1")
    if np.any(x <= 0):
        raise ValueError("Gamma data must be positive")
    if x.size < 2 or np.var(x) <= 0:
        raise ValueError("degenerate sample: zero variance")
    draws, ok = sample_gamma_posterior_batch(x[None, :], N, rng)
    if not ok[0]:
        raise ValueError("alpha posterior has no interior mode for this sample")
    return PosteriorDraws("gamma", draws[0])


# ---------------------------------------------------------------------------
# GPD

@numba.njit(cache=True)
def _gpd_log_target(x, g, log_s):
    # log likelihood + log MDI prior + log-sigma Jacobian
    if g <= -1.0:
        return -np.inf
    s = math.exp(log_s)
    k = g / s
    acc = 0.0
    for xi in x:
        z = 1.0 + k * xi
        if z <= 0.0:
            return -np.inf
        acc += math.log1p(k * xi)
    if g == 0.0:
        ll = -x.size * log_s - x.sum() / s
    else:
        ll = -x.size * log_s - (1.0 / g + 1.0) * acc
    return ll - g


@numba.njit(cache=True)
def mh_accept(log_u, current, proposed):
    """Metropolis rule for a symmetric proposal; ``log_u`` is log of a U(0,1) draw."""
    return proposed > -np.inf and log_u < proposed - current


@numba.njit(cache=True)
def _mh_chain(x, g0, ls0, steps_g, steps_ls, log_u, burn_in, thin, out):
    g, ls = g0, ls0
    cur = _gpd_log_target(x, g, ls)
    accepted = 0
    kept = 0
    n_keep = out.shape[0]
    for i in range(steps_g.size):
        gc = g + steps_g[i]
        lc = ls + steps_ls[i]
        prop = _gpd_log_target(x, gc, lc)
        if mh_accept(log_u[i], cur, prop):
            g, ls, cur = gc, lc, prop
            accepted += 1
        j = i + 1 - burn_in
        if j > 0 and j % thin == 0 and kept < n_keep:
            out[kept, 0] = g
            out[kept, 1] = math.exp(ls)
            kept += 1
    return accepted


def gpd_log_target(sample, gamma, log_sigma) -> float:
    """Log posterior density of (gamma, log sigma), up to a constant."""
    return float(_gpd_log_target(np.asarray(sample, float), float(gamma), float(log_sigma)))


def _gpd_start(x, cfg: MhConfig):
    if cfg.init is not None:
        return cfg.init.gamma, math.log(cfg.init.sigma)
    try:
        fit = ml_gpd(x)
        if fit.gamma > -1.0:
            return fit.gamma, math.log(fit.sigma)
    except FitError:
        pass
    return 0.0, math.log(float(np.mean(x)))


def sample_gpd_posterior(sample, N: int, cfg: MhConfig | None = None,
                         rng: np.random.Generator | None = None) -> PosteriorDraws:
    """N draws from p(gamma, sigma | x) by random-walk Metropolis-Hastings.

    The chain runs in (gamma, log sigma) with independent normal steps,
    discards ``cfg.burn_in`` iterations and keeps every ``cfg.thin``-th
    state afterwards.
    """
    x = as_sample(sample)
    if N < 1:
        raise ValueError("N must be at least 1")
    if np.any(x <= 0):
        raise ValueError("GPD excesses must be positive")
    cfg = cfg or MhConfig()
    rng = rng if rng is not None else np.random.default_rng()
    g0, ls0 = _gpd_start(x, cfg)
    if not np.isfinite(_gpd_log_target(x, g0, ls0)):
        g0, ls0 = 0.0, math.log(float(np.mean(x)))
        if not np.isfinite(_gpd_log_target(x, g0, ls0)):
            raise ValueError("no starting point with finite posterior density")
    steps = cfg.burn_in + N * cfg.thin
    z = rng.standard_normal((2, steps))
    log_u = np.log(rng.random(steps))
    out = np.empty((N, 2))
    accepted = _mh_chain(x, g0, ls0, z[0] * cfg.sd_gamma, z[1] * cfg.sd_log_sigma,
                         log_u, cfg.burn_in, cfg.thin, out)
    return PosteriorDraws("gpd", out, accepted / steps)
