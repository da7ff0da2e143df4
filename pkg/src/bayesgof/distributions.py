"""Densities, CDFs, samplers and MDI priors for the Gamma and GPD models,
plus the alternative distributions used in the power studies.

All functions accept numpy arrays where it makes sense. Random draws always
come from an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special


@dataclass(frozen=True)
class GammaParams:
    """Gamma shape ``alpha`` and rate ``lam``; density lam^a/G(a) x^(a-1) e^(-lam x)."""

    alpha: float
    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"Gamma shape must be positive, got {self.alpha}")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"Gamma rate must be positive, got {self.lam}")

    def __str__(self):
        return f"Gamma({self.alpha:g},{self.lam:g})"


@dataclass(frozen=True)
class GpdParams:
    """Generalised Pareto shape ``gamma`` and scale ``sigma``.

    Support is (0, inf) for gamma >= 0 and (0, -sigma/gamma) for gamma < 0.
    """

    gamma: float
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.gamma):
            raise ValueError(f"GPD shape must be finite, got {self.gamma}")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"GPD scale must be positive, got {self.sigma}")

    @property
    def upper(self) -> float:
        """Upper support endpoint (inf when gamma >= 0)."""
        return -self.sigma / self.gamma if self.gamma < 0 else math.inf

    def __str__(self):
        return f"GPD({self.gamma:g},{self.sigma:g})"


@dataclass(frozen=True)
class LogNormal:
    """Log-normal with ``mu``, ``sigma`` of the underlying normal."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise ValueError(f"LogNormal mu must be finite, got {self.mu}")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"LogNormal sigma must be positive, got {self.sigma}")

    def __str__(self):
        return f"LN({self.mu:g},{self.sigma:g})"


@dataclass(frozen=True)
class FDist:
    """Snedecor F with ``d1`` numerator and ``d2`` denominator degrees of freedom."""

    d1: float
    d2: float

    def __post_init__(self):
        for name in ("d1", "d2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"F {name} must be positive, got {v}")

    def __str__(self):
        return f"F({self.d1:g},{self.d2:g})"


@dataclass(frozen=True)
class Weibull:
    """Weibull with CDF 1 - exp(-(x/scale)^shape)."""

    shape: float
    scale: float

    def __post_init__(self):
        for name in ("shape", "scale"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"Weibull {name} must be positive, got {v}")

    def __str__(self):
        return f"W({self.shape:g},{self.scale:g})"


SamplingDistribution = Union[GammaParams, GpdParams, LogNormal, FDist, Weibull]


def as_sample(values) -> np.ndarray:
    """Validate and convert observations to a 1-d float array."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("sample must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    return x


# ---------------------------------------------------------------------------
# special functions

def _check_positive(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError(f"{name} requires finite positive arguments")
    return arr


def ln_gamma_fn(x):
    """log Gamma(x) for x > 0."""
    arr = _check_positive(x, "ln_gamma_fn")
    out = special.gammaln(arr)
    return float(out) if np.ndim(out) == 0 else out


def digamma(x):
    """Digamma psi(x) for x > 0."""
    arr = _check_positive(x, "digamma")
    out = special.psi(arr)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Gamma

def _gamma_logpdf(x, alpha, lam):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (alpha * np.log(lam) - special.gammaln(alpha)
               + (alpha - 1.0) * np.log(np.where(x > 0, x, 1.0)) - lam * x)
    return np.where(x > 0, out, -np.inf)


def gamma_ln_pdf(x, p: GammaParams):
    """Log density of Gamma(alpha, rate lam); -inf for x <= 0."""
    out = _gamma_logpdf(x, p.alpha, p.lam)
    return float(out) if np.ndim(out) == 0 else out


def _gamma_cdf(x, alpha, lam):
    x = np.asarray(x, dtype=float)
    return special.gammainc(alpha, lam * np.maximum(x, 0.0))


def gamma_cdf(x, p: GammaParams):
    """Regularized lower incomplete gamma P(alpha, lam*x); 0 for x <= 0."""
    out = _gamma_cdf(x, p.alpha, p.lam)
    return float(out) if np.ndim(out) == 0 else out


def gamma_sample(p: GammaParams, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.gamma(p.alpha, 1.0 / p.lam, size=n)


# ---------------------------------------------------------------------------
# Generalised Pareto
#
# The array helpers broadcast over (x, gamma, sigma) so that one call can
# handle a whole batch of parameter draws.

def _gpd_z(x, g, s):
    # log(1 + g x / s), nan outside the support
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log1p(g * x / s)


def _gpd_inside(x, g, s):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (x > 0) & (1.0 + g * x / s > 0)


def _gpd_logpdf(x, g, s):
    x, g, s = np.broadcast_arrays(np.asarray(x, float), np.asarray(g, float),
                                  np.asarray(s, float))
    inside = _gpd_inside(x, g, s)
    z = _gpd_z(x, g, s)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(g == 0, x / s, (1.0 / np.where(g == 0, 1.0, g) + 1.0) * z)
        out = -np.log(s) - tail
    return np.where(inside, out, -np.inf)


def _gpd_cdf(x, g, s):
    x, g, s = np.broadcast_arrays(np.asarray(x, float), np.asarray(g, float),
                                  np.asarray(s, float))
    z = _gpd_z(x, g, s)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        h = np.where(g == 0, x / s, z / np.where(g == 0, 1.0, g))
        out = -np.expm1(-h)
    out = np.where(x <= 0, 0.0, out)
    # beyond the upper endpoint when g < 0
    out = np.where((x > 0) & ~_gpd_inside(x, g, s), 1.0, out)
    return np.clip(out, 0.0, 1.0)


def _gpd_ppf(u, g, s):
    u, g, s = np.broadcast_arrays(np.asarray(u, float), np.asarray(g, float),
                                  np.asarray(s, float))
    w = -np.log1p(-u)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(g == 0, s * w, s * np.expm1(g * w) / np.where(g == 0, 1.0, g))
    return out


def gpd_ln_pdf(x, p: GpdParams):
    """Log GPD density; -inf outside the support, exponential limit at gamma=0."""
    out = _gpd_logpdf(x, p.gamma, p.sigma)
    return float(out) if np.ndim(out) == 0 else out


def gpd_cdf(x, p: GpdParams):
    """GPD CDF 1 - (1 + gamma x/sigma)^(-1/gamma), clamped to [0, 1]."""
    out = _gpd_cdf(x, p.gamma, p.sigma)
    return float(out) if np.ndim(out) == 0 else out


def gpd_quantile(u, p: GpdParams):
    """Inverse CDF: sigma((1-u)^(-gamma) - 1)/gamma, or -sigma log(1-u) at gamma=0."""
    out = _gpd_ppf(u, p.gamma, p.sigma)
    return float(out) if np.ndim(out) == 0 else out


def gpd_sample(p: GpdParams, n: int, rng: np.random.Generator) -> np.ndarray:
    return _gpd_ppf(rng.random(n), p.gamma, p.sigma)


# ---------------------------------------------------------------------------
# sampling from any distribution in the study

def alt_sample(d: SamplingDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` values from any of the study distributions."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if isinstance(d, GammaParams):
        return gamma_sample(d, n, rng)
    if isinstance(d, GpdParams):
        return gpd_sample(d, n, rng)
    if isinstance(d, LogNormal):
        return rng.lognormal(d.mu, d.sigma, size=n)
    if isinstance(d, FDist):
        return rng.f(d.d1, d.d2, size=n)
    if isinstance(d, Weibull):
        return d.scale * rng.weibull(d.shape, size=n)
    raise TypeError(f"unsupported distribution {d!r}")


# ---------------------------------------------------------------------------
# MDI priors (unnormalized, log scale)

def mdi_ln_prior_gamma(p: GammaParams) -> float:
    """log lam - log G(alpha) + (alpha - 1) psi(alpha) - alpha."""
    a = p.alpha
    return (math.log(p.lam) - float(special.gammaln(a))
            + (a - 1.0) * float(special.psi(a)) - a)


def _mdi_ln_prior_gpd(g, s):
    g = np.asarray(g, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.log(s) - g
    return np.where(g > -1.0, out, -np.inf)


def mdi_ln_prior_gpd(p: GpdParams) -> float:
    """-log sigma - gamma on gamma > -1, -inf otherwise.

    exp{E[log f(X)]} for the GPD: E[log(1 + gamma X/sigma)] = gamma, so
    E[log f] = -log sigma - (1 + gamma).
    """
    return float(_mdi_ln_prior_gpd(p.gamma, p.sigma))
