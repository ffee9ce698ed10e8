"""Likelihood evaluation and maximum-likelihood fitting from summary statistics.

The one-way random-effects model admits a closed-form -2 log-likelihood in the
per-subject means and the pooled within-subject sum of squares (dropping the
data-independent constant):

    (N - n) log sw2 + sse / sw2
        + sum_i [ log(sw2 + m_i sb2) + m_i (ybar_i - mu)^2 / (sw2 + m_i sb2) ]

The mean profiles out exactly as a precision-weighted average, so fitting is a
2-D derivative-free search over (log sw2, sb2) with the sb2 = 0 boundary
available in closed form.  The null-constrained fit (mu^2 + sw2 + sb2 = rho0^2)
optionally adds the restricted-likelihood adjustment ``log(sum_i W_i)``; the
normal-approximation score test uses that variant for its null variance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .data import DegenerateDataError, LmmParams, SummaryStats

__all__ = ["ConvergenceError", "FitReport", "neg2ll", "profile_mu", "fit_mle", "fit_mle_null"]

_NM_OPTIONS = dict(xatol=1e-8, fatol=1e-10, maxiter=4000, maxfev=4000)


class ConvergenceError(RuntimeError):
    """Optimizer hit its iteration cap; ``.report`` carries the best point found."""

    def __init__(self, message: str, report: "FitReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class FitReport:
    """Fit outcome: parameters, the minimized -2 log-likelihood (constant dropped),
    a convergence flag, and whether the between-variance landed on its zero boundary."""

    params: LmmParams
    neg2loglik: float
    converged: bool
    boundary_sigma_b2: bool


def _neg2ll_arrays(m: np.ndarray, ybar: np.ndarray, sse: float, n: int, N: int,
                   mu: float, sw2: float, sb2: float) -> float:
    d = sw2 + m * sb2
    r = ybar - mu
    return float((N - n) * math.log(sw2) + sse / sw2 + np.sum(np.log(d) + m * r * r / d))


def neg2ll(summary: SummaryStats, params: LmmParams) -> float:
    """-2 log-likelihood (up to the dropped constant) at the given parameters."""
    if not (params.sigma_w2 > 0.0):
        raise ValueError("sigma_w2 must be > 0")
    return _neg2ll_arrays(summary.m_array(), summary.ybar_array(), summary.sse,
                          summary.n, summary.total_n,
                          params.mu, params.sigma_w2, params.sigma_b2)


def profile_mu(summary: SummaryStats, sigma_w2: float, sigma_b2: float) -> float:
    """The mean minimizing the objective at fixed variances: the precision-weighted
    average of the subject means with weights ``1 / (sigma_b2 + sigma_w2 / m_i)``."""
    if not (sigma_w2 > 0.0):
        raise ValueError("sigma_w2 must be > 0")
    m = summary.m_array()
    w = 1.0 / (sigma_b2 + sigma_w2 / m)
    return float(w @ summary.ybar_array() / w.sum())


def _moment_starts(m: np.ndarray, ybar: np.ndarray, sse: float, n: int, N: int):
    sw2_m = sse / (N - n)
    vy = float(np.var(ybar, ddof=1))
    sb2_m = max(0.0, vy - sw2_m * float(np.mean(1.0 / m)))
    return [(sw2_m, sb2_m), (sw2_m, 0.0), (sw2_m, vy)]


def fit_mle(summary: SummaryStats) -> FitReport:
    """Unconstrained maximum-likelihood fit.

    The mean is profiled analytically; the outer search runs Nelder-Mead over
    ``(log sw2, s)`` with ``sb2 = s**2`` from deterministic moment-based starts,
    and the interior optimum is compared against the closed-form ``sb2 = 0``
    profile.
    """
    m = summary.m_array()
    ybar = summary.ybar_array()
    sse, n, N = summary.sse, summary.n, summary.total_n
    if sse <= 0.0:
        raise DegenerateDataError(
            "sse = 0: within-subject variance is degenerate, sigma_w2 is not identifiable"
        )

    def objective(x):
        sw2 = math.exp(x[0])
        sb2 = x[1] * x[1]
        w = 1.0 / (sb2 + sw2 / m)
        mu = float(w @ ybar / w.sum())
        return _neg2ll_arrays(m, ybar, sse, n, N, mu, sw2, sb2)

    best = None
    for sw2_0, sb2_0 in _moment_starts(m, ybar, sse, n, N):
        res = optimize.minimize(objective, [math.log(sw2_0), math.sqrt(sb2_0)],
                                method="Nelder-Mead", options=_NM_OPTIONS)
        if best is None or res.fun < best.fun:
            best = res

    # closed-form sb2 = 0 profile: weights proportional to m_i, then sw2 in one step
    mu_b = float(m @ ybar / N)
    rb = ybar - mu_b
    sw2_b = (sse + float(m @ (rb * rb))) / N
    f_b = _neg2ll_arrays(m, ybar, sse, n, N, mu_b, sw2_b, 0.0)

    if f_b <= best.fun:
        params = LmmParams(mu=mu_b, sigma_w2=sw2_b, sigma_b2=0.0)
        return FitReport(params, f_b, converged=True, boundary_sigma_b2=True)

    sw2 = math.exp(best.x[0])
    sb2 = best.x[1] * best.x[1]
    params = LmmParams(mu=profile_mu(summary, sw2, sb2), sigma_w2=sw2, sigma_b2=sb2)
    report = FitReport(params, float(best.fun), converged=bool(best.success),
                       boundary_sigma_b2=False)
    if not best.success:
        raise ConvergenceError("unconstrained fit hit the iteration cap", report)
    return report


def _simplex_to_uv(a: float, b: float) -> list[float]:
    rest = max(1e-12, 1.0 - a - b)
    return [math.log(max(a, 1e-12) / rest), math.log(max(b, 1e-12) / rest)]


def fit_mle_null(summary: SummaryStats, rho0: float, *,
                 restricted: bool = False,
                 unconstrained: FitReport | None = None) -> FitReport:
    """Fit constrained to ``mu^2 + sw2 + sb2 = rho0^2``.

    The search covers the open simplex ``{sw2 > 0, sb2 > 0, sw2 + sb2 < rho0^2}``
    through an unconstrained log-ratio map, plus one-dimensional searches along
    the ``sb2 = 0`` and ``mu = 0`` edges; the best candidate wins.  The sign of
    mu follows the unconstrained estimate (both signs are tried when that
    estimate is essentially zero).

    With ``restricted=True`` the objective adds the restricted-likelihood term
    ``log(sum_i W_i)``.  This variant supplies the score test's null variance;
    the reported ``neg2loglik`` is always the plain objective at the fitted
    parameters.
    """
    rho0 = float(rho0)
    if not (rho0 > 0.0) or not math.isfinite(rho0):
        raise ValueError(f"rho0 must be > 0 and finite, got {rho0!r}")
    m = summary.m_array()
    ybar = summary.ybar_array()
    sse, n, N = summary.sse, summary.n, summary.total_n
    r2 = rho0 * rho0

    base = unconstrained if unconstrained is not None else fit_mle(summary)
    if abs(base.params.mu) < 1e-12:
        signs = (1.0, -1.0)
    else:
        signs = (math.copysign(1.0, base.params.mu),)

    def value(mu, sw2, sb2):
        f = _neg2ll_arrays(m, ybar, sse, n, N, mu, sw2, sb2)
        if restricted:
            f += math.log(float(np.sum(1.0 / (sb2 + sw2 / m))))
        return f

    # candidate: (objective, sw2, sb2, mu, converged)
    candidates = []

    rho_hat2 = base.params.mu ** 2 + base.params.sigma_w2 + base.params.sigma_b2
    a_hat = base.params.sigma_w2 / rho_hat2
    b_hat = base.params.sigma_b2 / rho_hat2
    sw2_m = sse / (N - n)

    for sign in signs:

        def objective(x, sign=sign):
            eu = math.exp(min(x[0], 700.0))
            ev = math.exp(min(x[1], 700.0))
            den = 1.0 + eu + ev
            sw2 = r2 * eu / den
            sb2 = r2 * ev / den
            mu = sign * math.sqrt(max(0.0, r2 - sw2 - sb2))
            return value(mu, sw2, sb2)

        starts = [
            _simplex_to_uv(min(a_hat, 0.98), min(b_hat, 0.98 - min(a_hat, 0.49))),
            _simplex_to_uv(1.0 / 3.0, 1.0 / 3.0),
            _simplex_to_uv(min(0.9, sw2_m / r2), 0.05),
        ]
        for x0 in starts:
            res = optimize.minimize(objective, x0, method="Nelder-Mead", options=_NM_OPTIONS)
            eu, ev = math.exp(min(res.x[0], 700.0)), math.exp(min(res.x[1], 700.0))
            den = 1.0 + eu + ev
            sw2 = r2 * eu / den
            sb2 = r2 * ev / den
            mu = sign * math.sqrt(max(0.0, r2 - sw2 - sb2))
            candidates.append((float(res.fun), sw2, sb2, mu, bool(res.success)))

        # edge sb2 = 0: mu soaks up the remainder of the constraint
        res = optimize.minimize_scalar(
            lambda t, sign=sign: value(sign * math.sqrt(max(0.0, r2 - t)), t, 0.0),
            bounds=(1e-12 * r2, r2 * (1.0 - 1e-12)), method="bounded",
            options=dict(xatol=1e-12),
        )
        mu = sign * math.sqrt(max(0.0, r2 - res.x))
        candidates.append((float(res.fun), float(res.x), 0.0, mu, True))

    # edge mu = 0: variances split the whole of rho0^2 (sign-independent)
    res = optimize.minimize_scalar(
        lambda t: value(0.0, t, r2 - t),
        bounds=(1e-12 * r2, r2 * (1.0 - 1e-14)), method="bounded",
        options=dict(xatol=1e-12),
    )
    candidates.append((float(res.fun), float(res.x), r2 - float(res.x), 0.0, True))
    # corner sw2 = rho0^2
    candidates.append((value(0.0, r2, 0.0), r2, 0.0, 0.0, True))

    f_best, sw2, sb2, mu, ok = min(candidates, key=lambda c: c[0])
    params = LmmParams(mu=mu, sigma_w2=sw2, sigma_b2=sb2)
    plain = _neg2ll_arrays(m, ybar, sse, n, N, mu, sw2, sb2)
    report = FitReport(params, plain, converged=ok, boundary_sigma_b2=(sb2 == 0.0))
    if not ok:
        raise ConvergenceError("constrained fit hit the iteration cap", report)
    return report
