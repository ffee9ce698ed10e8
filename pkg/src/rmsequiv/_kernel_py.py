"""Pure NumPy implementation of the hot-loop kernels.

Fallback for environments without the compiled extension.  The arithmetic is
kept operation-for-operation identical to the C kernels (accumulations run
subject by subject, the bisection takes the same branch decisions, and the
normal tail uses the same libm ``erfc``), so both backends produce
bit-identical pivotal draws.
"""
from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "python"

_SQRT1_2 = math.sqrt(0.5)
_HI_CAP = 1e300
_REL_TOL = 1e-10

_erfc_obj = np.frompyfunc(math.erfc, 1, 1)


def _erfc(x: np.ndarray) -> np.ndarray:
    # math.erfc binds the platform libm erfc, matching the C kernel bitwise.
    return _erfc_obj(x).astype(np.float64)


def ssr_batch(ybar: np.ndarray, m: np.ndarray, qw: np.ndarray, sigma_b2: np.ndarray) -> np.ndarray:
    """Weighted between-mean sum of squares for each draw's (qw, sigma_b2)."""
    sw = np.zeros_like(qw)
    sy = np.zeros_like(qw)
    for i in range(m.shape[0]):
        w = 1.0 / (sigma_b2 + qw / m[i])
        sw += w
        sy += w * ybar[i]
    yt = sy / sw
    out = np.zeros_like(qw)
    for i in range(m.shape[0]):
        w = 1.0 / (sigma_b2 + qw / m[i])
        d = ybar[i] - yt
        out += w * d * d
    return out


def solve_qb_batch(ybar: np.ndarray, m: np.ndarray, qw: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-draw root of ssr(sigma_b2) = target, truncated at the sigma_b2 = 0 boundary."""
    B = qw.shape[0]
    qb = np.zeros(B)
    f0 = ssr_batch(ybar, m, qw, np.zeros(B))
    active = np.nonzero(target < f0)[0]
    if active.size == 0:
        return qb
    qw_a = qw[active]
    tg_a = target[active]
    lo = np.zeros(active.size)
    hi = np.ones(active.size)

    # bracket: double hi until ssr(hi) <= target (capped)
    grow = np.arange(active.size)
    while grow.size:
        f = ssr_batch(ybar, m, qw_a[grow], hi[grow])
        need = f > tg_a[grow]
        grow = grow[need]
        hi[grow] *= 2.0
        grow = grow[hi[grow] <= _HI_CAP]

    live = np.arange(active.size)
    while live.size:
        mid = 0.5 * (lo[live] + hi[live])
        pinched = (mid <= lo[live]) | (mid >= hi[live])
        live = live[~pinched]
        mid = mid[~pinched]
        if live.size == 0:
            break
        f = ssr_batch(ybar, m, qw_a[live], mid)
        up = f > tg_a[live]
        lo[live[up]] = mid[up]
        hi[live[~up]] = mid[~up]
        live = live[(hi[live] - lo[live]) > _REL_TOL * hi[live]]

    qb[active] = 0.5 * (lo + hi)
    return qb


def wtilde_batch(ybar: np.ndarray, m: np.ndarray, qw: np.ndarray, qb: np.ndarray):
    """Per-draw sum of conditional weights and weighted mean of the subject means."""
    sw = np.zeros_like(qw)
    sy = np.zeros_like(qw)
    for i in range(m.shape[0]):
        w = 1.0 / (qb + qw / m[i])
        sw += w
        sy += w * ybar[i]
    return sw, sy / sw


def exceed_batch(s: np.ndarray, sum_wt: np.ndarray, ytilde: np.ndarray, q: float) -> np.ndarray:
    """Conditional probability that the pivotal total exceeds ``q``, per draw."""
    arg = sum_wt * (q - s)
    out = np.ones_like(s)
    pos = arg > 0.0
    if np.any(pos):
        sq = np.sqrt(arg[pos])
        sl = np.sqrt(ytilde[pos] * ytilde[pos] * sum_wt[pos])
        v = 0.5 * _erfc((sq - sl) * _SQRT1_2) + 0.5 * _erfc((sq + sl) * _SQRT1_2)
        out[pos] = np.minimum(1.0, v)
    return out
