"""Goodness-of-fit tests for the Gamma and GPD models.

Five procedures share one discrepancy statistic (Anderson-Darling):

* ``exact_test``: parameters fully specified.
* ``plugin_naive_test``: parameters replaced by estimates, replicates not
  re-estimated (miscalibrated on purpose; kept for comparison).
* ``parametric_bootstrap_test``: replicates drawn at the estimate and
  re-estimated.
* ``ppp_test``: posterior predictive p-value, averaged over posterior draws.
* ``bayes_predictive_test``: statistic averaged over the posterior, reference
  distribution taken from the posterior predictive.

Every replicate loop is vectorized: the N replicate samples form the rows of
one array.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .distributions import (GammaParams, GpdParams, _gpd_ppf, as_sample)
from .errors import EstimationError
from .posterior import (MhConfig, PosteriorDraws, sample_gamma_posterior,
                        sample_gamma_posterior_batch, sample_gpd_posterior)
from .statistics import (ad_batch_gamma, ad_batch_gpd, ml_gpd_batch,
                         mom_gamma_batch)

DEFAULT_N = 999
DEFAULT_N_OUTER = 100


class ModelFamily(enum.Enum):
    GAMMA = "gamma"
    GPD = "gpd"

    @classmethod
    def parse(cls, value) -> "ModelFamily":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown model family {value!r}; expected gamma or gpd") from None


class Method(enum.Enum):
    EXACT = "exact"
    PLUGIN = "plugin"
    PARBOOT = "parboot"
    PPP = "ppp"
    BAYES = "bayes"


@dataclass
class TestResult:
    """Outcome of one test.

    For the bootstrap-type methods ``n_replicates_used + n_failed`` is the
    requested replicate count; replicates whose re-estimation failed are
    excluded from the p-value.
    """

    __test__ = False  # not a pytest class

    p_value: float
    observed_stat: float
    n_replicates_used: int
    n_failed: int
    method: Method
    inner_p_values: np.ndarray | None = field(default=None, repr=False)


def continuity_p_value(count_exceeding: int, N: int) -> float:
    """(count + 0.5) / (N + 1)."""
    if N < 1 or not 0 <= count_exceeding <= N:
        raise ValueError(f"need 0 <= count <= N and N >= 1, got {count_exceeding}, {N}")
    return (count_exceeding + 0.5) / (N + 1)


# ---------------------------------------------------------------------------
# per-family plumbing on parameter arrays: theta has shape (..., 2)

def _params_array(theta) -> np.ndarray:
    if isinstance(theta, GammaParams):
        return np.array([theta.alpha, theta.lam])
    if isinstance(theta, GpdParams):
        return np.array([theta.gamma, theta.sigma])
    return np.asarray(theta, dtype=float)


def _to_params(fam: ModelFamily, theta):
    a, b = (float(v) for v in theta)
    return GammaParams(a, b) if fam is ModelFamily.GAMMA else GpdParams(a, b)


def _check_params(fam: ModelFamily, theta):
    if fam is ModelFamily.GAMMA and not isinstance(theta, GammaParams):
        raise TypeError("Gamma model needs GammaParams")
    if fam is ModelFamily.GPD and not isinstance(theta, GpdParams):
        raise TypeError("GPD model needs GpdParams")


def _ad(fam, X, theta):
    """A^2 of each row of X against the row's parameters theta[..., :]."""
    if fam is ModelFamily.GAMMA:
        return ad_batch_gamma(X, theta[..., 0], theta[..., 1])
    return ad_batch_gpd(X, theta[..., 0], theta[..., 1])


def _simulate(fam, theta, n, rng):
    """One sample of size n per parameter row: returns shape theta.shape[:-1] + (n,)."""
    shape = theta.shape[:-1] + (n,)
    a = theta[..., 0][..., None]
    b = theta[..., 1][..., None]
    if fam is ModelFamily.GAMMA:
        return rng.gamma(np.broadcast_to(a, shape), 1.0 / np.broadcast_to(b, shape))
    return _gpd_ppf(rng.random(shape), a, b)


def _fit(fam, X):
    """Point estimates per row: returns (theta of shape (B, 2), ok mask)."""
    if fam is ModelFamily.GAMMA:
        a, b, ok = mom_gamma_batch(X)
    else:
        a, b, reason = ml_gpd_batch(X)
        ok = reason == None  # noqa: E711
        ok = ok.astype(bool)
    return np.stack([a, b], axis=-1), ok


def _fit_one(fam, x):
    theta, ok = _fit(fam, x[None, :])
    if not ok[0]:
        raise EstimationError(f"{fam.value} estimation failed on the observed sample")
    return theta[0]


def _check_sample(fam, x):
    x = as_sample(x)
    if x.size < 2:
        raise ValueError("sample needs at least 2 observations")
    if np.any(x <= 0):
        raise ValueError(f"{fam.value} data must be positive")
    return x


def posterior_draws(x, fam: ModelFamily, N: int, rng, mh: MhConfig | None = None) -> PosteriorDraws:
    """N draws from p(theta | x) under the family's MDI prior.

    Raises
    ------
    EstimationError
        When the posterior sampler cannot run on ``x``.
    """
    try:
        if fam is ModelFamily.GAMMA:
            return sample_gamma_posterior(x, N, rng)
        return sample_gpd_posterior(x, N, mh, rng)
    except ValueError as exc:
        raise EstimationError(f"posterior sampling failed: {exc}") from exc


def _posterior_batch(fam, X, K, rng, mh):
    """K posterior draws per row of X: returns (draws (B, K, 2), ok)."""
    if fam is ModelFamily.GAMMA:
        return sample_gamma_posterior_batch(X, K, rng)
    B = X.shape[0]
    out = np.full((B, K, 2), np.nan)
    ok = np.zeros(B, dtype=bool)
    for i in range(B):
        try:
            out[i] = sample_gpd_posterior(X[i], K, mh, rng).values
            ok[i] = True
        except ValueError:
            pass
    return out, ok


def _count_exceeding(replicates, observed) -> int:
    # strict ">" : ties are not exceedances
    return int(np.count_nonzero(replicates > observed))


# ---------------------------------------------------------------------------
# the tests

def exact_test(x, theta0, fam, N: int = DEFAULT_N, rng=None) -> TestResult:
    """Test the fully specified null f(. | theta0).

    The reference distribution of A^2 is simulated from N samples of the
    same size drawn at ``theta0``.
    """
    fam = ModelFamily.parse(fam)
    _check_params(fam, theta0)
    x = _check_sample(fam, x)
    rng = rng if rng is not None else np.random.default_rng()
    theta = _params_array(theta0)
    return _fixed_theta_test(fam, x, theta, N, rng, Method.EXACT)


def _fixed_theta_test(fam, x, theta, N, rng, method):
    if N < 1:
        raise ValueError("N must be at least 1")
    s = float(_ad(fam, x, theta))
    reps = _ad(fam, _simulate(fam, np.broadcast_to(theta, (N, 2)), x.size, rng), theta)
    p = continuity_p_value(_count_exceeding(reps, s), N)
    return TestResult(p, s, N, 0, method)


def plugin_naive_test(x, fam, N: int = DEFAULT_N, rng=None) -> TestResult:
    """Exact test at the estimated parameters, without re-estimating replicates.

    This ignores estimation error and is therefore conservative; it is
    provided as a baseline, not as a valid test.
    """
    fam = ModelFamily.parse(fam)
    x = _check_sample(fam, x)
    rng = rng if rng is not None else np.random.default_rng()
    theta = _fit_one(fam, x)
    return _fixed_theta_test(fam, x, theta, N, rng, Method.PLUGIN)


def _bootstrap_at(fam, x, theta, N, rng):
    """Steps 2-5 of the parametric bootstrap at parameters ``theta``.

    Returns (observed, count_exceeding, n_used, n_failed).
    """
    s = float(_ad(fam, x, theta))
    X = _simulate(fam, np.broadcast_to(theta, (N, 2)), x.size, rng)
    fits, ok = _fit(fam, X)
    reps = _ad(fam, X[ok], fits[ok])
    return s, _count_exceeding(reps, s), int(ok.sum()), int(N - ok.sum())


def parametric_bootstrap_test(x, fam, N: int = DEFAULT_N, rng=None) -> TestResult:
    """Parametric bootstrap with re-estimation on every replicate.

    Raises
    ------
    EstimationError
        When estimation fails on ``x`` (the p-value is missing) or on
        every replicate.
    """
    fam = ModelFamily.parse(fam)
    x = _check_sample(fam, x)
    if N < 1:
        raise ValueError("N must be at least 1")
    rng = rng if rng is not None else np.random.default_rng()
    theta = _fit_one(fam, x)
    s, count, used, failed = _bootstrap_at(fam, x, theta, N, rng)
    if used == 0:
        raise EstimationError("estimation failed on every bootstrap replicate")
    return TestResult(continuity_p_value(count, used), s, used, failed, Method.PARBOOT)


def ppp_test(x, fam, n_outer: int = DEFAULT_N_OUTER, N: int = DEFAULT_N, rng=None,
             mh: MhConfig | None = None, reestimate: bool = False,
             draws=None) -> TestResult:
    """Posterior predictive p-value: the mean over posterior draws theta_i of
    the p-value of A^2(x | theta_i) against replicates drawn at theta_i.

    By default the replicate statistic is evaluated at the same theta_i
    (the usual conditional ppp). With ``reestimate=True`` each replicate is
    re-estimated instead, i.e. a parametric bootstrap run at every draw.

    ``draws`` may pin the parameter draws, as an (n_outer, 2) array or a
    sequence of parameter objects; ``observed_stat`` is the mean of the
    per-draw observed statistics.
    """
    fam = ModelFamily.parse(fam)
    x = _check_sample(fam, x)
    if N < 1 or n_outer < 1:
        raise ValueError("N and n_outer must be at least 1")
    rng = rng if rng is not None else np.random.default_rng()
    if draws is None:
        thetas = posterior_draws(x, fam, n_outer, rng, mh).values
    elif isinstance(draws, PosteriorDraws):
        thetas = draws.values
    else:
        thetas = np.array([_params_array(t) for t in draws], dtype=float).reshape(-1, 2)

    pvals = np.empty(len(thetas))
    stats = np.empty(len(thetas))
    used = failed = 0
    for i, theta in enumerate(thetas):
        if reestimate:
            s, count, u, f = _bootstrap_at(fam, x, theta, N, rng)
            if u == 0:
                raise EstimationError("estimation failed on every replicate")
        else:
            s = float(_ad(fam, x, theta))
            reps = _ad(fam, _simulate(fam, np.broadcast_to(theta, (N, 2)), x.size, rng), theta)
            count, u, f = _count_exceeding(reps, s), N, 0
        pvals[i] = continuity_p_value(count, u)
        stats[i] = s
        used += u
        failed += f
    return TestResult(float(pvals.mean()), float(stats.mean()), used, failed,
                      Method.PPP, inner_p_values=pvals)


def bayes_predictive_test(x, fam, N: int = DEFAULT_N, mode: str = "approximate",
                          inner_n: int | None = None, rng=None,
                          mh: MhConfig | None = None) -> TestResult:
    """Objective-Bayes predictive test.

    Draws theta*_1..theta*_N from the posterior of ``x`` and one replicate
    sample per draw, so the replicates follow the posterior predictive
    distribution. The p-value is the continuity-corrected share of replicate
    statistics exceeding the observed one.

    Parameters
    ----------
    mode : {"approximate", "exact"}
        ``"approximate"`` evaluates every statistic at the sample's own point
        estimate. For the GPD, if ML fails on ``x`` the posterior mean is
        used; replicates whose ML fails are dropped. ``"exact"`` averages
        the statistic over posterior draws: ``N`` draws for ``x`` and
        ``inner_n`` draws from each replicate's own posterior.
    inner_n : int, optional
        Posterior draws per replicate in exact mode; defaults to ``N``.
        Small values leave posterior-draw noise in the replicate statistics
        but not in the averaged observed one, which makes the test
        conservative.
    """
    fam = ModelFamily.parse(fam)
    x = _check_sample(fam, x)
    if N < 1:
        raise ValueError("N must be at least 1")
    mode = mode.lower()
    if mode not in ("approximate", "exact"):
        raise ValueError(f"mode must be 'approximate' or 'exact', got {mode!r}")
    if inner_n is None:
        inner_n = N
    if mode == "exact" and inner_n < 1:
        raise ValueError("inner_n must be at least 1")
    rng = rng if rng is not None else np.random.default_rng()

    post = posterior_draws(x, fam, N, rng, mh).values
    n = x.size

    if mode == "approximate":
        theta_hat, ok = _fit(fam, x[None, :])
        if ok[0]:
            theta_hat = theta_hat[0]
        elif fam is ModelFamily.GPD:
            theta_hat = post.mean(axis=0)
        else:
            raise EstimationError("gamma estimation failed on the observed sample")
        s = float(_ad(fam, x, theta_hat))
        X = _simulate(fam, post, n, rng)
        fits, ok = _fit(fam, X)
        reps = _ad(fam, X[ok], fits[ok])
    else:
        s = float(np.mean(_ad(fam, np.broadcast_to(x, (N, n)), post)))
        X = _simulate(fam, post, n, rng)
        inner, ok = _posterior_batch(fam, X, inner_n, rng, mh)
        reps = _ad(fam, np.broadcast_to(X[ok][:, None, :], (int(ok.sum()), inner_n, n)),
                   inner[ok]).mean(axis=1)

    used = int(ok.sum())
    if used == 0:
        raise EstimationError("no usable replicate statistics")
    p = continuity_p_value(_count_exceeding(reps, s), used)
    return TestResult(p, s, used, N - used, Method.BAYES)


def run_method(method, x, fam, rng, N: int = DEFAULT_N, mode: str = "approximate",
               inner_n: int | None = None, n_outer: int = DEFAULT_N_OUTER,
               mh: MhConfig | None = None, theta0=None) -> TestResult:
    """Dispatch to one of the five tests by name."""
    method = Method(method) if not isinstance(method, Method) else method
    if method is Method.EXACT:
        if theta0 is None:
            raise ValueError("the exact test needs theta0")
        return exact_test(x, theta0, fam, N, rng)
    if method is Method.PLUGIN:
        return plugin_naive_test(x, fam, N, rng)
    if method is Method.PARBOOT:
        return parametric_bootstrap_test(x, fam, N, rng)
    if method is Method.PPP:
        return ppp_test(x, fam, n_outer, N, rng, mh)
    return bayes_predictive_test(x, fam, N, mode, inner_n, rng, mh)
