import math

import mpmath
import numpy as np
import pytest
from scipy import stats

from rmsequiv.special import chisq_sample, nc_chisq1_sf, std_normal_cdf, std_normal_quantile
from rmsequiv.streams import RandomStream


# ---------------------------------------------------------------------------
# standard normal CDF
# ---------------------------------------------------------------------------

def test_cdf_at_zero():
    assert std_normal_cdf(0.0) == 0.5


def test_cdf_95_quantile():
    assert abs(std_normal_cdf(1.6448536269514722) - 0.95) <= 1e-12


def test_cdf_against_high_precision_oracle():
    mpmath.mp.dps = 40
    for x in (-5.0, -2.0, -1.0, -0.3, 0.7, 1.0, 2.5, 4.0):
        expected = float(mpmath.ncdf(x))
        assert abs(std_normal_cdf(x) - expected) <= 1e-14


def test_cdf_symmetry():
    for x in np.linspace(-8.0, 8.0, 161):
        total = std_normal_cdf(x) + std_normal_cdf(-x)
        assert abs(total - 1.0) <= 1e-15


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_cdf_rejects_nonfinite(bad):
    with pytest.raises(ValueError):
        std_normal_cdf(bad)


# ---------------------------------------------------------------------------
# standard normal quantile
# ---------------------------------------------------------------------------

def _bisect_quantile(p, lo=-40.0, hi=40.0):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if std_normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_quantile_median():
    assert abs(std_normal_quantile(0.5)) <= 1e-15


@pytest.mark.parametrize("p", [0.95, 0.975])
def test_quantile_matches_bisection_oracle(p):
    assert abs(std_normal_quantile(p) - _bisect_quantile(p)) <= 1e-10


def test_quantile_known_values():
    assert abs(std_normal_quantile(0.95) - 1.6448536269514722) <= 1e-9
    assert abs(std_normal_quantile(0.975) - 1.959963984540054) <= 1e-9


def test_quantile_cdf_round_trip():
    for x in np.linspace(-6.0, 6.0, 121):
        assert abs(std_normal_quantile(std_normal_cdf(x)) - x) <= 1e-8


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, math.nan])
def test_quantile_rejects_out_of_range(p):
    with pytest.raises(ValueError):
        std_normal_quantile(p)


# ---------------------------------------------------------------------------
# chi-square sampling
# ---------------------------------------------------------------------------

def test_chisq_deterministic():
    s = RandomStream(11).substream(2)
    assert chisq_sample(2.0, s) == chisq_sample(2.0, s)
    assert np.array_equal(chisq_sample(2.0, s, size=10), chisq_sample(2.0, s, size=10))


def test_chisq_moments_df5():
    draws = chisq_sample(5.0, RandomStream(100), size=1_000_000)
    n = draws.size
    se_mean = math.sqrt(2.0 * 5.0 / n)
    assert abs(draws.mean() - 5.0) <= 4.0 * se_mean
    # Var(chi2_5) = 10; SE of the sample variance from the fourth moment
    se_var = math.sqrt((stats.chi2.moment(4, df=5) - stats.chi2.var(df=5) ** 2) / n)
    assert abs(draws.var(ddof=1) - 10.0) <= 4.0 * se_var


def test_chisq_df1_tail():
    draws = chisq_sample(1.0, RandomStream(101), size=1_000_000)
    frac = float(np.mean(draws <= 3.8415))
    se = math.sqrt(0.95 * 0.05 / draws.size)
    assert abs(frac - 0.95) <= 4.0 * se


@pytest.mark.parametrize("df", [0.0, -1.0, math.inf])
def test_chisq_rejects_bad_df(df):
    with pytest.raises(ValueError):
        chisq_sample(df, RandomStream(0))


# ---------------------------------------------------------------------------
# noncentral chi-square (1 df) survival function
# ---------------------------------------------------------------------------

def series_nc_chisq1_sf(x, lam, terms=200):
    """Poisson-mixture oracle: sum_k e^{-lam/2} (lam/2)^k / k! * SF_{chi2_{1+2k}}(x)."""
    half = lam / 2.0
    total = 0.0
    for k in range(terms):
        log_w = -half + k * math.log(half) - math.lgamma(k + 1) if half > 0 else (
            0.0 if k == 0 else -math.inf)
        total += math.exp(log_w) * stats.chi2.sf(x, df=1 + 2 * k)
    return total


def test_sf_at_zero_is_one():
    for lam in (0.0, 0.5, 3.0, 12.0):
        assert nc_chisq1_sf(0.0, lam) == 1.0
        assert nc_chisq1_sf(-2.0, lam) == 1.0


def test_sf_central_case():
    x = std_normal_quantile(0.975) ** 2
    assert abs(nc_chisq1_sf(x, 0.0) - 0.05) <= 1e-12


def test_sf_against_series_oracle_spot():
    assert abs(nc_chisq1_sf(2.0, 4.0) - series_nc_chisq1_sf(2.0, 4.0)) <= 1e-10


def test_sf_equals_two_sided_normal_tail_when_central():
    for x in (0.04, 0.5, 1.0, 3.8415, 9.0, 25.0):
        assert abs(nc_chisq1_sf(x, 0.0) - 2.0 * std_normal_cdf(-math.sqrt(x))) <= 1e-12


def test_sf_monotone_in_x_and_lambda():
    xs = np.linspace(0.01, 30.0, 40)
    lams = np.linspace(0.0, 20.0, 40)
    for lam in lams[::8]:
        vals = [nc_chisq1_sf(x, lam) for x in xs]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
    for x in xs[::8]:
        vals = [nc_chisq1_sf(x, lam) for lam in lams]
        assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_sf_limits():
    assert nc_chisq1_sf(math.inf, 3.0) == 0.0
    assert 0.0 <= nc_chisq1_sf(1e8, 3.0) <= 1e-12


def test_sf_rejects_bad_lambda():
    with pytest.raises(ValueError):
        nc_chisq1_sf(1.0, -0.5)
    with pytest.raises(ValueError):
        nc_chisq1_sf(1.0, math.inf)
