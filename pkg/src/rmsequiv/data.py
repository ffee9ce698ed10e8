"""Domain types and the reduction of raw grouped data to sufficient statistics.

Everything downstream (likelihood, generalized test, Z baselines) consumes only
the per-subject counts and means plus the pooled within-subject sum of squares,
so :class:`SummaryStats` is the central value type.  All types are immutable
and safe to share across threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DegenerateDataError",
    "GroupedSample",
    "SummaryStats",
    "LmmParams",
    "Hypothesis",
    "TestResult",
    "summarize",
    "rms",
]


class DegenerateDataError(ValueError):
    """Raised when data cannot support the model (too few subjects, no replication, sse = 0)."""


@dataclass(frozen=True)
class GroupedSample:
    """Raw paired-difference measurements keyed by subject.

    ``groups`` is an ordered sequence of ``(subject_id, values)`` pairs; values
    are the paired differences in measurement units (e.g. %SpO2).
    """

    groups: tuple[tuple[str, tuple[float, ...]], ...]

    def __init__(self, groups: Iterable[tuple[str, Sequence[float]]]):
        normalized = []
        for subject, values in groups:
            vals = tuple(float(v) for v in values)
            if len(vals) < 1:
                raise ValueError(f"subject {subject!r} has no measurements")
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"subject {subject!r} has non-finite measurements")
            normalized.append((str(subject), vals))
        if len(normalized) < 2:
            raise DegenerateDataError(
                f"need at least 2 subjects, got {len(normalized)}"
            )
        object.__setattr__(self, "groups", tuple(normalized))

    @property
    def n_subjects(self) -> int:
        return len(self.groups)


@dataclass(frozen=True)
class SummaryStats:
    """Sufficient statistics: per-subject counts and means plus pooled sse.

    Invariants: at least two subjects, every count positive, at least one
    subject replicated (``N - n >= 1``), ``sse >= 0``.
    """

    m: tuple[int, ...]
    ybar: tuple[float, ...]
    sse: float

    def __post_init__(self):
        m = tuple(int(v) for v in self.m)
        ybar = tuple(float(v) for v in self.ybar)
        if len(m) != len(ybar):
            raise ValueError(f"len(m)={len(m)} != len(ybar)={len(ybar)}")
        if len(m) < 2:
            raise DegenerateDataError(f"need at least 2 subjects, got {len(m)}")
        if any(v < 1 for v in m):
            raise ValueError("all subject counts must be >= 1")
        if not all(math.isfinite(v) for v in ybar):
            raise ValueError("subject means must be finite")
        sse = float(self.sse)
        if not math.isfinite(sse) or sse < 0.0:
            raise ValueError(f"sse must be finite and >= 0, got {sse!r}")
        if sum(m) - len(m) < 1:
            raise DegenerateDataError(
                "no replication: every subject has a single measurement (N - n = 0)"
            )
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "ybar", ybar)
        object.__setattr__(self, "sse", sse)

    @property
    def n(self) -> int:
        """Number of subjects."""
        return len(self.m)

    @property
    def total_n(self) -> int:
        """Total number of measurements N."""
        return sum(self.m)

    def m_array(self) -> np.ndarray:
        return np.asarray(self.m, dtype=np.float64)

    def ybar_array(self) -> np.ndarray:
        return np.asarray(self.ybar, dtype=np.float64)


@dataclass(frozen=True)
class LmmParams:
    """One-way random-effects model parameters (mean, within- and between-variance)."""

    mu: float
    sigma_w2: float
    sigma_b2: float

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError("mu must be finite")
        if not (self.sigma_w2 > 0.0) or not math.isfinite(self.sigma_w2):
            raise ValueError(f"sigma_w2 must be > 0, got {self.sigma_w2!r}")
        if self.sigma_b2 < 0.0 or not math.isfinite(self.sigma_b2):
            raise ValueError(f"sigma_b2 must be >= 0, got {self.sigma_b2!r}")

    @property
    def sigma_w(self) -> float:
        return math.sqrt(self.sigma_w2)

    @property
    def sigma_b(self) -> float:
        return math.sqrt(self.sigma_b2)

    @property
    def rho(self) -> float:
        return rms(self)


@dataclass(frozen=True)
class Hypothesis:
    """One-sided equivalency hypothesis: H0 rho >= rho0 vs Ha rho < rho0 at level alpha."""

    rho0: float
    alpha: float = 0.05

    def __post_init__(self):
        if not (self.rho0 > 0.0) or not math.isfinite(self.rho0):
            raise ValueError(f"rho0 must be > 0, got {self.rho0!r}")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha!r}")


@dataclass(frozen=True)
class TestResult:
    """Outcome of one equivalency test.

    ``ci_rho`` is the (1 - alpha) interval for rho (lower end truncated at 0);
    ``ci_rho2`` carries the untruncated interval on the squared scale for the
    normal-approximation methods.  ``B``/``seed`` are set for the Monte Carlo
    methods only.
    """

    method: str
    p_value: float
    ci_rho: tuple[float, float]
    estimates: LmmParams
    ci_rho2: tuple[float, float] | None = None
    B: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0):
            raise ValueError(f"p_value out of [0, 1]: {self.p_value!r}")
        lo, hi = self.ci_rho
        if not (0.0 <= lo <= hi):
            raise ValueError(f"invalid rho CI: {self.ci_rho!r}")


def summarize(raw: GroupedSample) -> SummaryStats:
    """Reduce raw grouped measurements to their sufficient statistics.

    Per-subject means and the pooled within-subject sum of squares
    ``sse = sum_i sum_j (y_ij - ybar_i)**2``; subjects with a single
    measurement contribute zero to sse but still enter the mean vector.
    """
    m = []
    ybar = []
    sse = 0.0
    for _, values in raw.groups:
        arr = np.asarray(values, dtype=np.float64)
        mean = float(arr.mean())
        m.append(arr.size)
        ybar.append(mean)
        d = arr - mean
        sse += float(d @ d)
    return SummaryStats(m=tuple(m), ybar=tuple(ybar), sse=sse)


def rms(params: LmmParams) -> float:
    """Root mean squares: ``sqrt(mu**2 + sigma_b2 + sigma_w2)``."""
    return math.sqrt(params.mu * params.mu + params.sigma_b2 + params.sigma_w2)
