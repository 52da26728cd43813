"""Offline change-point detection on a one-dimensional gap signal.

Two families live here:

* a window-free CUSUM mean-shift scan (``cusum_detect``), and
* penalized segmentation (``binseg`` greedy, ``pelt`` exact) over an L2 or
  centered RBF-kernel segment cost.

Index convention: a change point or breakpoint ``k`` is the 0-based index of
the first value of the new segment, i.e. ``values[:k]`` / ``values[k:]``.
Ties are always broken toward the earliest index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, InsufficientDataError, ValidationError

MIN_SEGMENT = 2
ALWAYS_TOGETHER = "always_together"
ALWAYS_APART = "always_apart"
CHANGED = "changed"


@dataclass(frozen=True)
class Signal:
    values: np.ndarray
    steps: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "steps", tuple(int(s) for s in self.steps))
        if values.ndim != 1:
            raise ValidationError("signal must be one-dimensional")
        if len(self.steps) != len(values):
            raise ValidationError("values and steps differ in length")
        if len(values) < 3:
            raise InsufficientDataError(f"signal of length {len(values)} < 3")
        if not np.all(np.isfinite(values)):
            raise ValidationError("signal contains non-finite values")
        if any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise ValidationError("steps not strictly increasing")

    @classmethod
    def from_values(cls, values) -> "Signal":
        """Signal with steps 0..T-1, handy for synthetic data."""
        values = np.asarray(values, dtype=float)
        return cls(values, tuple(range(len(values))))

    @classmethod
    def from_series(cls, series) -> "Signal":
        return cls(np.asarray(series.gaps, dtype=float), series.steps)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class CostKind:
    name: str = "l2"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.name not in ("l2", "rbf"):
            raise ValidationError(f"unknown cost {self.name!r}")
        if self.name == "rbf" and not (self.bandwidth and self.bandwidth > 0):
            raise ValidationError("rbf cost needs a positive bandwidth")

    @classmethod
    def l2(cls):
        return cls("l2")

    @classmethod
    def rbf(cls, bandwidth):
        return cls("rbf", float(bandwidth))

    def label(self):
        if self.name == "l2":
            return "l2: sum of squared deviations from the segment mean"
        return (
            f"rbf: centered kernel cost n - (1/n) sum_ij K(y_i, y_j), "
            f"bandwidth {self.bandwidth!r}"
        )


@dataclass
class ChangePointResult:
    detected: bool
    index: int | None
    step: int | None
    statistic: float
    regime: str
    mean_gap: float
    std_gap: float
    breakpoints: list = field(default_factory=list)
    method: str = ""

    def __post_init__(self):
        if self.detected != (self.regime == CHANGED):
            raise ValidationError("detected must coincide with regime 'changed'")
        if self.detected != (self.index is not None):
            raise ValidationError("index is present exactly when detected")


# -- CUSUM -------------------------------------------------------------------


def cusum_statistic(signal: Signal, t: int) -> float:
    """|mean(values after t) - mean(first t values)| for 1 <= t <= T-1."""
    y = signal.values
    T = len(y)
    if not 1 <= t <= T - 1:
        raise DomainError(f"CUSUM split {t} outside [1, {T - 1}]")
    return _cusum_at(y - y[0], t)


def _cusum_at(d, t):
    # d is the signal minus a common reference value, so the reference cancels
    # and constant stretches contribute exact zeros
    T = len(d)
    return abs(math.fsum(d[t:]) / (T - t) - math.fsum(d[:t]) / t)


def trim_count(T: int, trim_frac: float) -> int:
    """Points excluded at each edge: ``ceil(trim_frac * T)``, at least 2."""
    return max(2, math.ceil(trim_frac * T - 1e-9))


def cusum_scan(signal: Signal, trim_frac: float = 0.1):
    """CUSUM statistic for every admissible split, as ``(candidates, stats)``."""
    if not 0 <= trim_frac < 0.5:
        raise DomainError(f"trim_frac {trim_frac} outside [0, 0.5)")
    y = signal.values
    T = len(y)
    m = trim_count(T, trim_frac)
    if T < 5 or T - m < m:
        raise InsufficientDataError(f"signal of length {T} too short for CUSUM with trim {m}")
    candidates = np.arange(m, T - m + 1)
    d = y - y[0]
    return candidates, np.array([_cusum_at(d, int(t)) for t in candidates])


def cusum_detect(signal: Signal, trim_frac: float = 0.1) -> ChangePointResult:
    candidates, stats = cusum_scan(signal, trim_frac)
    best = int(np.argmax(stats))  # first maximum
    t = int(candidates[best])
    stat = float(stats[best])
    return ChangePointResult(
        detected=True,
        index=t,
        step=signal.steps[t],
        statistic=stat,
        regime=CHANGED,
        mean_gap=float(np.mean(signal.values)),
        std_gap=float(np.std(signal.values, ddof=1)),
        breakpoints=[t],
        method="cusum",
    )


# -- segment costs -------------------------------------------------------------


def cost_l2(segment) -> float:
    y = np.asarray(segment, dtype=float)
    if y.size == 0:
        raise DomainError("cost of an empty segment")
    return float(np.sum((y - y.mean()) ** 2))


def rbf_gram(segment, bandwidth: float) -> np.ndarray:
    y = np.asarray(segment, dtype=float)
    # scale first: bandwidth**2 underflows for tiny bandwidths
    z = (y[:, None] - y[None, :]) / bandwidth
    with np.errstate(over="ignore"):
        return np.exp(-0.5 * z * z)


def cost_rbf(segment, bandwidth: float) -> float:
    """Centered kernel cost ``n - (1/n) * sum_ij K(y_i, y_j)``."""
    if not (bandwidth > 0 and math.isfinite(bandwidth)):
        raise DomainError(f"bandwidth must be positive and finite, got {bandwidth!r}")
    y = np.asarray(segment, dtype=float)
    n = y.size
    if n == 0:
        raise DomainError("cost of an empty segment")
    c = n - float(np.sum(rbf_gram(y, bandwidth))) / n
    return max(c, 0.0)


def segment_cost(values, start: int, end: int, cost: CostKind) -> float:
    seg = values[start:end]
    if cost.name == "l2":
        return cost_l2(seg)
    return cost_rbf(seg, cost.bandwidth)


def median_heuristic_bandwidth(signal) -> float:
    y = np.asarray(signal.values if isinstance(signal, Signal) else signal, dtype=float)
    if y.size < 2:
        raise InsufficientDataError("bandwidth needs >= 2 values")
    i, j = np.triu_indices(y.size, k=1)
    med = float(np.median(np.abs(y[i] - y[j])))
    return med if med > 0 else 1.0


def default_penalty(signal: Signal) -> float:
    """BIC-style ``2 * sigma^2 * log T`` with the global sample std."""
    y = signal.values
    return 2.0 * float(np.var(y, ddof=1)) * math.log(len(y))


def segmentation_objective(values, breakpoints: Sequence[int], cost: CostKind, penalty: float) -> float:
    """Total segment cost plus ``penalty`` per breakpoint."""
    bounds = [0, *breakpoints, len(values)]
    total = math.fsum(segment_cost(values, a, b, cost) for a, b in zip(bounds, bounds[1:]))
    return total + penalty * len(breakpoints)


# -- Binseg ----------------------------------------------------------------


def _best_split(values, start, end, cost, min_size):
    """Earliest split minimizing left+right cost, as ``(k, split_cost)``."""
    best_k, best = None, math.inf
    for k in range(start + min_size, end - min_size + 1):
        c = segment_cost(values, start, k, cost) + segment_cost(values, k, end, cost)
        if c < best:
            best_k, best = k, c
    return best_k, best


def binseg_path(signal: Signal, cost: CostKind, max_breakpoints: int, penalty: float,
                min_size: int = MIN_SEGMENT) -> list[int]:
    """Greedy binary segmentation; breakpoints in the order they were found.

    At each round the split with the largest cost reduction over all current
    segments is taken, provided the reduction exceeds ``penalty``.
    """
    if max_breakpoints < 1:
        raise DomainError("max_breakpoints must be >= 1")
    if penalty < 0:
        raise DomainError("penalty must be nonnegative")
    y = signal.values
    T = len(y)
    if T < 5:
        raise InsufficientDataError(f"signal of length {T} too short for Binseg")
    segments = [(0, T)]
    cache = {}
    found = []
    while len(found) < max_breakpoints:
        best = None
        for seg in segments:
            if seg not in cache:
                a, b = seg
                k, split = _best_split(y, a, b, cost, min_size)
                gain = segment_cost(y, a, b, cost) - split if k is not None else -math.inf
                cache[seg] = (gain, k)
            gain, k = cache[seg]
            if k is None:
                continue
            if best is None or gain > best[0] or (gain == best[0] and k < best[1]):
                best = (gain, k, seg)
        if best is None or not best[0] > penalty:
            break
        gain, k, (a, b) = best
        found.append(k)
        segments.remove((a, b))
        segments.extend([(a, k), (k, b)])
    return found


def binseg(signal: Signal, cost: CostKind, max_breakpoints: int, penalty: float,
           min_size: int = MIN_SEGMENT) -> list[int]:
    return sorted(binseg_path(signal, cost, max_breakpoints, penalty, min_size))


# -- PELT ------------------------------------------------------------------


def pelt(signal: Signal, cost: CostKind, penalty: float, min_size: int = MIN_SEGMENT) -> list[int]:
    """Exact penalized segmentation by dynamic programming with pruning.

    Minimizes ``sum(segment costs) + penalty * n_breakpoints`` over all
    segmentations whose segments have at least ``min_size`` points.
    """
    if penalty <= 0:
        raise DomainError("PELT penalty must be positive")
    y = signal.values
    T = len(y)
    if T < 5:
        raise InsufficientDataError(f"signal of length {T} too short for PELT")

    F = [math.inf] * (T + 1)
    F[0] = -penalty
    last = [0] * (T + 1)
    active = [0]
    # A candidate pruned at time t is only provably useless from t + min_size
    # on, since the shortcut segment (t, t') must itself be admissible.
    recently_pruned: list[list[int]] = []
    for t in range(min_size, T + 1):
        pool = sorted(set(active).union(*recently_pruned))
        scored = {}
        for s in pool:
            if t - s >= min_size and F[s] < math.inf:
                scored[s] = F[s] + segment_cost(y, s, t, cost)
        if scored:
            s_best = min(scored, key=lambda s: (scored[s], s))
            F[t] = scored[s_best] + penalty
            last[t] = s_best
        slack = 1e-12 * max(1.0, abs(F[t]))
        pruned_now = [s for s, v in scored.items() if v > F[t] + slack and s in active]
        active = [s for s in active if s not in pruned_now]
        recently_pruned.append(pruned_now)
        if len(recently_pruned) > min_size - 1:
            recently_pruned.pop(0)
        if F[t] < math.inf:
            active.append(t)

    bkps = []
    t = T
    while t > 0:
        s = last[t]
        if s > 0:
            bkps.append(s)
        t = s
    return sorted(bkps)


def exhaustive_segmentation(signal: Signal, cost: CostKind, penalty: float,
                            min_size: int = MIN_SEGMENT):
    """Brute-force optimum over every admissible segmentation (small T only)."""
    y = signal.values
    T = len(y)
    best = (math.inf, None)

    def rec(start, bkps):
        nonlocal best
        # close the final segment here
        if T - start >= min_size:
            obj = segmentation_objective(y, bkps, cost, penalty)
            if obj < best[0]:
                best = (obj, list(bkps))
        for k in range(start + min_size, T - min_size + 1):
            rec(k, bkps + [k])

    rec(0, [])
    return best


# -- regimes and the segmentation driver ----------------------------------------


def regime_classify(signal: Signal) -> str:
    """Label a signal with no detected break by its mean relative to its std error."""
    y = signal.values
    T = len(y)
    sd = float(np.std(y, ddof=1))
    return ALWAYS_APART if abs(float(np.mean(y))) > 2.0 * sd / math.sqrt(T) else ALWAYS_TOGETHER


def segmentation_detect(signal: Signal, cost: str = "rbf", penalty: float | str = "auto",
                        method: str = "binseg", trim_frac: float = 0.1,
                        bandwidth: float | None = None,
                        max_breakpoints: int | None = None) -> ChangePointResult:
    """Trim the edges, segment, and report the first detected breakpoint.

    With Binseg the reported change point is the first split found; with PELT
    it is the earliest breakpoint. Signals with no breakpoint fall back to
    ``regime_classify``.
    """
    T = len(signal)
    m = trim_count(T, trim_frac) if trim_frac > 0 else 0
    if T - 2 * m < 5:
        raise InsufficientDataError(f"signal of length {T} too short after trimming {m} per side")
    inner = Signal(signal.values[m:T - m], signal.steps[m:T - m])
    if cost == "rbf":
        kind = CostKind.rbf(bandwidth if bandwidth else median_heuristic_bandwidth(inner))
    elif cost == "l2":
        kind = CostKind.l2()
    else:
        raise ValidationError(f"unknown cost {cost!r}")
    pen = default_penalty(inner) if penalty == "auto" else float(penalty)
    if method == "binseg":
        path = binseg_path(inner, kind, max_breakpoints or len(inner), pen)
        first = path[0] if path else None
        bkps = sorted(path)
    elif method == "pelt":
        # an all-constant signal makes the auto penalty zero; PELT needs it positive
        bkps = pelt(inner, kind, pen if pen > 0 else 1e-12)
        first = bkps[0] if bkps else None
    else:
        raise ValidationError(f"unknown segmentation method {method!r}")

    mean_gap = float(np.mean(signal.values))
    std_gap = float(np.std(signal.values, ddof=1))
    if first is None:
        return ChangePointResult(False, None, None, 0.0, regime_classify(signal),
                                 mean_gap, std_gap, [], method)
    if method == "binseg":
        a, b = 0, len(inner)  # the first Binseg split is always of the whole signal
    else:
        bounds = [0, *bkps, len(inner)]
        a, b = bounds[0], bounds[2]
    reduction = (segment_cost(inner.values, a, b, kind)
                 - segment_cost(inner.values, a, first, kind)
                 - segment_cost(inner.values, first, b, kind))
    index = first + m
    return ChangePointResult(True, index, signal.steps[index], reduction, CHANGED,
                             mean_gap, std_gap, [k + m for k in bkps], method)
