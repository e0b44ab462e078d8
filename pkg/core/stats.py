"""Two-sample Kolmogorov-Smirnov statistic."""
from __future__ import annotations

import numpy as np
from scipy import stats


def ks_two_sample(a, b) -> float:
    """sup_x |F_a(x) - F_b(x)| over the pooled breakpoints."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    points = np.concatenate((a, b))
    cdf_a = np.searchsorted(a, points, side="right") / a.size
    cdf_b = np.searchsorted(b, points, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def ks_p_value(a, b) -> float:
    """Asymptotic two-sided p-value of the KS statistic."""
    return float(stats.ks_2samp(a, b, method="asymp").pvalue)


def bonferroni_level(level: float, cells: int) -> float:
    if cells < 1:
        raise ValueError(f"need at least one cell, got {cells}")
    return level / cells
