"""Summary statistics and two-sample tests for comparing training runs."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import special


class StatsError(ValueError):
    pass


def moving_average(series: Sequence[float], window: int = 100) -> np.ndarray:
    """Trailing mean over the last ``min(i + 1, window)`` values."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        return x
    w = min(window, x.size)
    # per-window means rather than cumulative sums, which drift over long series
    warm = [x[:i + 1].mean() for i in range(w - 1)]
    full = np.lib.stride_tricks.sliding_window_view(x, w).mean(axis=1)
    out = np.concatenate([warm, full])
    return np.clip(out, x.min(), x.max())


def quantile(sorted_values: Sequence[float], p: float) -> float:
    """Linear interpolation at rank ``(n - 1) * p`` of already sorted data."""
    n = len(sorted_values)
    if n == 0:
        raise StatsError("quantile of empty data")
    pos = (n - 1) * p
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return float(sorted_values[lo] + (sorted_values[hi] - sorted_values[lo]) * frac)


@dataclass
class StatsSummary:
    count: int
    mean: float
    median: float
    min: float
    q1: float
    q3: float
    max: float
    iqr: float
    outliers: list[float] = field(default_factory=list)
    success_rate: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def boxplot_summary(values: Sequence[float], successes: Sequence[bool] | None = None) -> StatsSummary:
    x = np.sort(np.asarray(values, dtype=np.float64))
    if x.size == 0:
        raise StatsError("boxplot of empty data")
    q1, med, q3 = quantile(x, 0.25), quantile(x, 0.5), quantile(x, 0.75)
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    rate = None
    if successes is not None:
        s = np.asarray(successes, dtype=bool)
        rate = float(s.mean()) if s.size else 0.0
    return StatsSummary(count=int(x.size), mean=float(x.mean()), median=med, min=float(x[0]), q1=q1,
                        q3=q3, max=float(x[-1]), iqr=iqr,
                        outliers=[float(v) for v in x if v < lo or v > hi], success_rate=rate)


@dataclass
class StepsToGoal:
    mean: float | None
    median: float | None
    success_rate: float
    successes: int
    episodes: int


def steps_to_goal_aggregate(records) -> StepsToGoal:
    """Step statistics over goal-reaching episodes only; ``None`` when there are none."""
    records = list(records)
    steps = [r.steps for r in records if r.reached_goal]
    n = len(records)
    if not steps:
        return StepsToGoal(None, None, 0.0, 0, n)
    s = sorted(steps)
    return StepsToGoal(float(np.mean(s)), quantile(s, 0.5), len(s) / n, len(s), n)


@dataclass
class TestResult:
    test: str
    statistic: float | None
    p_value: float | None
    df: float | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return asdict(self)


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        return TestResult("welch_t", None, None, None, "each sample needs at least 2 values")
    va, vb = a.var(ddof=1) / na, b.var(ddof=1) / nb
    se2 = va + vb
    if se2 <= 0.0:
        return TestResult("welch_t", None, None, None, "both samples have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2 * se2 / (va * va / (na - 1) + vb * vb / (nb - 1))
    p = 2.0 * special.stdtr(df, -abs(t))
    return TestResult("welch_t", float(t), float(min(max(p, 0.0), 1.0)), float(df))


def midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties given their average rank."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_rank_sum(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Mann-Whitney U for sample ``a`` (pairs with a > b, ties counting one half).

    Two-sided p-value from the normal approximation with tie-corrected
    variance and a 0.5 continuity correction.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = a.size, b.size
    if na == 0 or nb == 0:
        return TestResult("rank_sum", None, None, None, "both samples must be non-empty")
    pooled = np.concatenate([a, b])
    ranks = midranks(pooled)
    u = float(ranks[:na].sum() - na * (na + 1) / 2.0)
    n = na + nb
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(counts.astype(np.float64) ** 3 - counts))
    var = na * nb / 12.0 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0.0:
        return TestResult("rank_sum", u, None, None, "all observations are identical")
    mu = na * nb / 2.0
    z = (abs(u - mu) - 0.5) / math.sqrt(var)
    p = 2.0 * special.ndtr(-z) if z > 0 else 1.0
    return TestResult("rank_sum", u, float(min(p, 1.0)))


def histogram(values: Sequence[float], bin_count: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width bins over [min, max]; bins are right-open except the last."""
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise StatsError("histogram of empty data")
    counts, edges = np.histogram(x, bins=bin_count)
    return edges, counts
