"""Scalar probability primitives.

Standard-normal CDF and quantile, chi-square sampling on a
:class:`~rmsequiv.streams.RandomStream`, and the survival function of the
noncentral chi-square distribution with one degree of freedom.  The latter sits
in the innermost loop of the generalized test, so it is evaluated in closed
form from the normal CDF rather than by series summation.
"""
from __future__ import annotations

import math
import statistics

import numpy as np

from .streams import RandomStream

__all__ = ["std_normal_cdf", "std_normal_quantile", "chisq_sample", "nc_chisq1_sf"]

_SQRT1_2 = math.sqrt(0.5)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_NORMAL = statistics.NormalDist()


def std_normal_cdf(x: float) -> float:
    """Standard normal CDF ``Phi(x)``.

    Parameters
    ----------
    x : float
        Finite evaluation point.

    Returns
    -------
    float
        ``P(Z <= x)`` for ``Z ~ N(0, 1)``, accurate to well below 1e-12.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x!r}")
    return 0.5 * math.erfc(-x * _SQRT1_2)


def std_normal_quantile(p: float) -> float:
    """Inverse of :func:`std_normal_cdf` on the open interval (0, 1).

    A rational approximation seeds one/two Newton polish steps against
    :func:`std_normal_cdf`, so the round trip ``cdf(quantile(p)) == p`` holds
    to the limit double precision allows.

    Parameters
    ----------
    p : float
        Probability, strictly between 0 and 1.

    Returns
    -------
    float
        ``x`` such that ``Phi(x) = p``.
    """
    p = float(p)
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must lie strictly in (0, 1), got {p!r}")
    x = _NORMAL.inv_cdf(p)
    for _ in range(2):
        density = _INV_SQRT_2PI * math.exp(-0.5 * x * x)
        if density <= 0.0:
            break
        x -= (std_normal_cdf(x) - p) / density
    return x


def chisq_sample(df: float, rng: RandomStream, size: int | None = None):
    """Chi-square draw(s) from a counter-based stream.

    The same ``(df, rng, size)`` triple always produces the same values; use a
    fresh substream for fresh randomness.

    Parameters
    ----------
    df : float
        Degrees of freedom, ``df > 0``.
    rng : RandomStream
        Stream supplying the variates.
    size : int, optional
        When given, return an ndarray of that many sequential draws; otherwise
        a single float.
    """
    df = float(df)
    if not (df > 0.0) or not math.isfinite(df):
        raise ValueError(f"df must be a positive finite real, got {df!r}")
    gen = rng.generator()
    if size is None:
        return float(gen.chisquare(df))
    return gen.chisquare(df, size=size)


def nc_chisq1_sf(x: float, lam: float) -> float:
    """Survival function of the noncentral chi-square with 1 df.

    For ``W = Z**2`` with ``Z ~ N(sqrt(lam), 1)`` this is
    ``P(W > x) = Phi(sqrt(lam) - sqrt(x)) + Phi(-sqrt(lam) - sqrt(x))``
    for ``x >= 0`` and exactly 1 for ``x <= 0``.

    Parameters
    ----------
    x : float
        Evaluation point (any real; ``+inf`` allowed and gives 0).
    lam : float
        Noncentrality parameter, ``lam >= 0`` and finite.

    Returns
    -------
    float
        Tail probability in ``[0, 1]``.
    """
    lam = float(lam)
    if not math.isfinite(lam) or lam < 0.0:
        raise ValueError(f"lambda must be finite and >= 0, got {lam!r}")
    x = float(x)
    if math.isnan(x):
        raise ValueError("x must not be NaN")
    if x <= 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    sx = math.sqrt(x)
    sl = math.sqrt(lam)
    # Phi(sl - sx) + Phi(-sl - sx), written through erfc; clamp the final
    # rounding so the result is a valid probability.
    value = 0.5 * math.erfc((sx - sl) * _SQRT1_2) + 0.5 * math.erfc((sx + sl) * _SQRT1_2)
    return min(1.0, value)
