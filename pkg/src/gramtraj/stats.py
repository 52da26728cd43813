"""Correlation and group-comparison tests used to compare trajectory patterns."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, InsufficientDataError, ValidationError
from .special import chi2_sf, f_sf, t_sf


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: tuple
    p_value: float
    test: str = ""

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        p = min(1.0, max(0.0, self.p_value))
        object.__setattr__(self, "p_value", p)


def _as_groups(groups) -> list[tuple[str, np.ndarray]]:
    if isinstance(groups, Mapping):
        items = list(groups.items())
    else:
        items = [(str(i), g) for i, g in enumerate(groups)]
    return [(name, np.asarray(g, dtype=float)) for name, g in items]


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("pearson needs two equal-length 1-D sequences")
    if x.size < 3:
        raise InsufficientDataError("pearson needs >= 3 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DomainError("correlation undefined for a constant sequence")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def rankdata(a: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    a = np.asarray(a, dtype=float)
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size, dtype=float)
    sorted_a = a[order]
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    return pearson(rankdata(x), rankdata(y))


def one_way_anova(groups) -> TestResult:
    """F test with df (k-1, N-k); ``groups`` is a mapping or a sequence."""
    gs = _as_groups(groups)
    k = len(gs)
    if k < 2:
        raise InsufficientDataError("ANOVA needs >= 2 groups")
    if any(g.size < 1 for _, g in gs):
        raise InsufficientDataError("every ANOVA group needs >= 1 value")
    N = sum(g.size for _, g in gs)
    if N <= k:
        raise InsufficientDataError("ANOVA needs more observations than groups")
    grand = np.concatenate([g for _, g in gs]).mean()
    ss_between = math.fsum(g.size * (g.mean() - grand) ** 2 for _, g in gs)
    ss_within = math.fsum(float(np.sum((g - g.mean()) ** 2)) for _, g in gs)
    df1, df2 = k - 1, N - k
    if ss_within == 0:
        if ss_between == 0:
            raise DomainError("F undefined: no variance within or between groups")
        return TestResult(math.inf, (df1, df2), 0.0, "one_way_anova")
    F = (ss_between / df1) / (ss_within / df2)
    return TestResult(F, (df1, df2), f_sf(F, df1, df2), "one_way_anova")


def two_sample_t(a: Sequence[float], b: Sequence[float], pooled: bool = False) -> TestResult:
    """Two-sided two-sample t test; Welch unless ``pooled``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise InsufficientDataError("t test needs >= 2 values per group")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    diff = a.mean() - b.mean()
    if pooled:
        df = na + nb - 2
        sp2 = ((na - 1) * va + (nb - 1) * vb) / df
        se2 = sp2 * (1.0 / na + 1.0 / nb)
        name = "pooled_t"
    else:
        qa, qb = va / na, vb / nb
        se2 = qa + qb
        df = se2 * se2 / (qa * qa / (na - 1) + qb * qb / (nb - 1)) if se2 > 0 else na + nb - 2
        name = "welch_t"
    if se2 == 0:
        if diff == 0:
            raise DomainError("t undefined: both groups constant with equal means")
        t = math.copysign(math.inf, diff)
        return TestResult(t, (float(df),), 0.0, name)
    t = float(diff / math.sqrt(se2))
    return TestResult(t, (float(df),), 2.0 * t_sf(abs(t), df), name)


def kruskal_wallis(groups) -> TestResult:
    """H test with tie correction, chi-square p-value with k-1 df."""
    gs = _as_groups(groups)
    k = len(gs)
    if k < 2:
        raise InsufficientDataError("Kruskal-Wallis needs >= 2 groups")
    values = np.concatenate([g for _, g in gs])
    N = values.size
    if N < 5:
        raise InsufficientDataError("Kruskal-Wallis needs >= 5 observations")
    ranks = rankdata(values)
    h = 0.0
    pos = 0
    for _, g in gs:
        r = ranks[pos:pos + g.size]
        pos += g.size
        h += r.sum() ** 2 / g.size
    H = 12.0 / (N * (N + 1)) * h - 3.0 * (N + 1)
    _, counts = np.unique(values, return_counts=True)
    ties = float(np.sum(counts ** 3 - counts))
    correction = 1.0 - ties / (N ** 3 - N)
    if correction == 0:  # all values identical
        return TestResult(0.0, (k - 1,), 1.0, "kruskal_wallis")
    H = float(max(H / correction, 0.0))
    return TestResult(H, (k - 1,), chi2_sf(H, k - 1), "kruskal_wallis")


def pairwise_t(groups, pooled: bool = False) -> dict[tuple[str, str], TestResult]:
    """t test for every ordered pair of named groups, in input order."""
    gs = _as_groups(groups)
    out = {}
    for i in range(len(gs)):
        for j in range(i + 1, len(gs)):
            out[(gs[i][0], gs[j][0])] = two_sample_t(gs[i][1], gs[j][1], pooled=pooled)
    return out
