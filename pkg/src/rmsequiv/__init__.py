"""Equivalency testing of paired repeated-measure device-comparison data.

Generalized pivotal test and confidence interval for the root-mean-squares
parameter of a one-way random-effects model, large-sample Z baselines,
maximum-likelihood estimation from summary statistics, and a deterministic
parallel simulation harness.
"""

__version__ = "0.1.0"

from .data import (DegenerateDataError, GroupedSample, Hypothesis, LmmParams,
                   SummaryStats, TestResult, rms, summarize)
from .estimate import ConvergenceError, FitReport, fit_mle, fit_mle_null, neg2ll, profile_mu
from .gt import (GtConfig, PivotalDraw, PivotalEnsemble, build_ensemble,
                 conditional_exceed, draw_pivotal, gt_ci, gt_ci_plain, gt_pvalue,
                 gt_pvalue_plain, solve_qb, ssr_at)
from .kernels import active_backend, available_backends, set_backend
from .sim import (Scenario, ScenarioError, ScenarioResult, format_grid_tables,
                  generate_dataset, load_config, run_grid, run_scenario)
from .special import chisq_sample, nc_chisq1_sf, std_normal_cdf, std_normal_quantile
from .streams import RandomStream
from .ztests import ZMoments, r_statistic, z_moments, z_score_test, z_wald_test

__all__ = [
    "__version__",
    "DegenerateDataError", "GroupedSample", "Hypothesis", "LmmParams",
    "SummaryStats", "TestResult", "rms", "summarize",
    "ConvergenceError", "FitReport", "fit_mle", "fit_mle_null", "neg2ll", "profile_mu",
    "GtConfig", "PivotalDraw", "PivotalEnsemble", "build_ensemble",
    "conditional_exceed", "draw_pivotal", "gt_ci", "gt_ci_plain", "gt_pvalue",
    "gt_pvalue_plain", "solve_qb", "ssr_at",
    "active_backend", "available_backends", "set_backend",
    "Scenario", "ScenarioError", "ScenarioResult", "format_grid_tables",
    "generate_dataset", "load_config", "run_grid", "run_scenario",
    "chisq_sample", "nc_chisq1_sf", "std_normal_cdf", "std_normal_quantile",
    "RandomStream",
    "ZMoments", "r_statistic", "z_moments", "z_score_test", "z_wald_test",
]
