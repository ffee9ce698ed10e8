import numpy as np
import pytest

from rmsequiv.data import SummaryStats

# Oximetry comparison study: per-subject sizes and mean differences (%),
# pooled within-subject sum of squares published alongside.
OXIMETRY_M = (9, 10, 10, 10, 5, 10, 10, 10, 10, 10, 10, 10, 2, 10, 10, 10)
OXIMETRY_YBAR = (-0.026, 0.447, 0.083, -0.103, -2.587, -0.61, 0.04, -0.593,
                 0.963, 0.643, -0.2, -1.337, -4.333, -2.807, 0.563, -0.797)
OXIMETRY_SSE = 221.037


@pytest.fixture(scope="session")
def oximetry() -> SummaryStats:
    return SummaryStats(m=OXIMETRY_M, ybar=OXIMETRY_YBAR, sse=OXIMETRY_SSE)


def reconstruct_raw(summary: SummaryStats) -> list[tuple[str, list[float]]]:
    """Raw values consistent with the summary: exact means, sse spread over
    the replicated subjects proportional to their degrees of freedom."""
    total_df = summary.total_n - summary.n
    groups = []
    for i, (m, ybar) in enumerate(zip(summary.m, summary.ybar)):
        vals = np.full(m, float(ybar))
        if m >= 2:
            part = summary.sse * (m - 1) / total_df
            a = np.sqrt(part / 2.0)
            vals[0] += a
            vals[1] -= a
        groups.append((f"s{i}", vals.tolist()))
    return groups
