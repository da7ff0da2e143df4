"""Goodness-of-fit tests for models with unknown parameters.

Gamma and Generalised Pareto nulls, tested with the Anderson-Darling
statistic by an objective-Bayes predictive test, the parametric bootstrap,
the posterior predictive p-value, a plug-in test and the known-parameter
test; plus a Monte Carlo harness for size and power studies.
"""

from .distributions import (FDist, GammaParams, GpdParams, LogNormal, Weibull,
                            alt_sample)
from .errors import ConfigError, EstimationError, ResultParseError
from .gof import (Method, ModelFamily, TestResult, bayes_predictive_test,
                  continuity_p_value, exact_test, parametric_bootstrap_test,
                  plugin_naive_test, ppp_test)
from .harness import (ExperimentConfig, ExperimentResult, MethodSpec,
                      coverage_curve, read_result, rejection_rate,
                      run_experiment, uniformity_check, write_result)
from .posterior import (MhConfig, PosteriorDraws, sample_gamma_posterior,
                        sample_gpd_posterior)
from .statistics import FailReason, FitError, anderson_darling, ml_gpd, mom_gamma

__version__ = "0.1.0"
