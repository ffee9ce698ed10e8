"""Large-sample Z baselines on the mean-square statistic.

Both tests normalize ``R = sum(Y^2) / N`` (reconstructed exactly from the
sufficient statistics) by a moment-based variance.  The score variant
evaluates that variance at a null-constrained fit, the Wald variant at the
unconstrained fit; each builds its confidence interval from the same variance
it tests with.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Hypothesis, LmmParams, SummaryStats, TestResult
from .estimate import FitReport, fit_mle, fit_mle_null
from .special import std_normal_cdf, std_normal_quantile

__all__ = ["ZMoments", "r_statistic", "z_moments", "z_score_test", "z_wald_test",
           "NULL_VARIANCE_MODES"]

NULL_VARIANCE_MODES = ("constrained", "constrained-ml", "scaled")


@dataclass(frozen=True)
class ZMoments:
    """First two moments of the mean-square statistic R."""

    mean_r: float
    var_r: float

    def __post_init__(self):
        if not (self.var_r > 0.0):
            raise ValueError(f"var_r must be > 0, got {self.var_r!r}")


def r_statistic(summary: SummaryStats) -> float:
    """Mean of the squared measurements, ``(sse + sum_i m_i ybar_i^2) / N``."""
    m = summary.m_array()
    ybar = summary.ybar_array()
    return (summary.sse + float(m @ (ybar * ybar))) / summary.total_n


def z_moments(params: LmmParams, m) -> ZMoments:
    """Exact mean and variance of R under the model at the given parameters."""
    m = np.asarray(m, dtype=np.float64)
    N = float(m.sum())
    mu2 = params.mu * params.mu
    sw2 = params.sigma_w2
    sb2 = params.sigma_b2
    d = sw2 + m * sb2
    total = float(np.sum(d * d + (m - 1.0) * sw2 * sw2 + 2.0 * m * d * mu2))
    return ZMoments(mean_r=mu2 + sb2 + sw2, var_r=2.0 / (N * N) * total)


def _null_params(summary: SummaryStats, rho0: float, mode: str,
                 unconstrained: FitReport) -> LmmParams:
    if mode == "constrained":
        return fit_mle_null(summary, rho0, restricted=True, unconstrained=unconstrained).params
    if mode == "constrained-ml":
        return fit_mle_null(summary, rho0, restricted=False, unconstrained=unconstrained).params
    if mode == "scaled":
        p = unconstrained.params
        c = rho0 * rho0 / (p.mu * p.mu + p.sigma_w2 + p.sigma_b2)
        return LmmParams(mu=p.mu * math.sqrt(c), sigma_w2=p.sigma_w2 * c,
                         sigma_b2=p.sigma_b2 * c)
    raise ValueError(f"unknown null variance mode {mode!r}; choices: {NULL_VARIANCE_MODES}")


def _z_result(summary: SummaryStats, hyp: Hypothesis, var: float,
              estimates: LmmParams, method: str) -> TestResult:
    r = r_statistic(summary)
    se = math.sqrt(var)
    z = (r - hyp.rho0 ** 2) / se
    p = std_normal_cdf(z)
    zq = std_normal_quantile(1.0 - hyp.alpha / 2.0)
    lo2, hi2 = r - zq * se, r + zq * se
    ci_rho = (math.sqrt(max(0.0, lo2)), math.sqrt(max(0.0, hi2)))
    return TestResult(method=method, p_value=p, ci_rho=ci_rho, ci_rho2=(lo2, hi2),
                      estimates=estimates)


def z_score_test(summary: SummaryStats, hyp: Hypothesis, *,
                 null_variance: str = "constrained",
                 unconstrained: FitReport | None = None) -> TestResult:
    """Score-type Z test: variance evaluated under the null constraint.

    ``null_variance`` selects how the null parameters are obtained:
    "constrained" (restricted-likelihood constrained fit, the default),
    "constrained-ml" (plain-likelihood constrained fit), or "scaled"
    (unconstrained estimates rescaled onto the constraint).
    """
    fit = unconstrained if unconstrained is not None else fit_mle(summary)
    params_null = _null_params(summary, hyp.rho0, null_variance, fit)
    var = z_moments(params_null, summary.m).var_r
    return _z_result(summary, hyp, var, fit.params, "Z-score")


def z_wald_test(summary: SummaryStats, hyp: Hypothesis, *,
                unconstrained: FitReport | None = None) -> TestResult:
    """Wald-type Z test: variance evaluated at the unconstrained fit."""
    fit = unconstrained if unconstrained is not None else fit_mle(summary)
    var = z_moments(fit.params, summary.m).var_r
    return _z_result(summary, hyp, var, fit.params, "Z-Wald")
