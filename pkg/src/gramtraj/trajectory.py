"""Minimal-pair scores, log-perplexity gaps and trajectory categories.

Sign convention used throughout the package::

    gap = log(sum PPL_good) - log(sum PPL_bad)

so a negative gap means the grammatical sentences are preferred.
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolation, DomainError, InsufficientDataError, ValidationError

MIN_SERIES_LENGTH = 3


@dataclass(frozen=True)
class PairScore:
    """Mean per-token NLL (nats) of one good/bad pair at one checkpoint."""

    class_name: str
    pair_id: int
    checkpoint_step: int
    nll_good: float
    n_tokens_good: int
    nll_bad: float
    n_tokens_bad: int

    def __post_init__(self):
        if not self.class_name:
            raise ValidationError("class_name must be nonempty")
        if self.pair_id < 0 or self.checkpoint_step < 0:
            raise ValidationError(
                f"pair_id and checkpoint_step must be >= 0 "
                f"(got {self.pair_id}, {self.checkpoint_step})"
            )
        for name in ("nll_good", "nll_bad"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"{name} must be finite and >= 0, got {v!r}")
        if self.n_tokens_good < 1 or self.n_tokens_bad < 1:
            raise ValidationError("token counts must be >= 1")

    @property
    def key(self):
        return (self.class_name, self.pair_id, self.checkpoint_step)

    def swapped(self) -> "PairScore":
        """The same pair with the good and bad roles exchanged."""
        return PairScore(
            self.class_name, self.pair_id, self.checkpoint_step,
            self.nll_bad, self.n_tokens_bad, self.nll_good, self.n_tokens_good,
        )


@dataclass(frozen=True)
class GapSeries:
    class_name: str
    steps: tuple
    gaps: tuple

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(int(s) for s in self.steps))
        object.__setattr__(self, "gaps", tuple(float(g) for g in self.gaps))
        if len(self.steps) != len(self.gaps):
            raise ValidationError("steps and gaps differ in length")
        if len(self.steps) < MIN_SERIES_LENGTH:
            raise InsufficientDataError(
                f"{self.class_name}: need >= {MIN_SERIES_LENGTH} checkpoints, "
                f"got {len(self.steps)}",
                subject=self.class_name,
            )
        if any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise ValidationError(f"{self.class_name}: steps not strictly increasing")

    def __len__(self):
        return len(self.steps)

    def negated(self) -> "GapSeries":
        return GapSeries(self.class_name, self.steps, tuple(-g for g in self.gaps))


@dataclass(frozen=True)
class SegmentMeans:
    early_mean: float
    late_mean: float
    n_early: int
    n_late: int


class TrajectoryCategory(str, enum.Enum):
    EES = "EES"  # erroneous early, sustained
    CES = "CES"  # correct early, sustained
    CLS = "CLS"  # correct late separation
    ELS = "ELS"  # erroneous late separation

    def __str__(self):
        return self.value


def perplexity(nll: float) -> float:
    if not math.isfinite(nll):
        raise DomainError(f"perplexity of non-finite NLL {nll!r}")
    return math.exp(nll)


def pair_correct(ppl_good: float, ppl_bad: float) -> int:
    # ties count as incorrect
    return 1 if ppl_good < ppl_bad else 0


def class_accuracy(pairs: Sequence[tuple[float, float]]) -> float:
    """Percentage of pairs whose good sentence has strictly lower perplexity."""
    if len(pairs) == 0:
        raise DomainError("accuracy of an empty pair set")
    return 100.0 * sum(pair_correct(g, b) for g, b in pairs) / len(pairs)


def _logsumexp(values):
    m = max(values)
    return m + math.log(math.fsum(math.exp(v - m) for v in values))


def gap_at_checkpoint(pairs: Sequence[PairScore], aggregate: str = "sum_ppl") -> float:
    """Log-perplexity gap for all pairs of one class at one checkpoint.

    ``aggregate="sum_ppl"`` sums perplexities before taking logs. The
    ``"mean_log"`` alternative averages per-pair log perplexities instead and
    exists only for sensitivity checks.
    """
    if len(pairs) == 0:
        raise InsufficientDataError("no pairs at checkpoint")
    steps = {p.checkpoint_step for p in pairs}
    if len(steps) != 1:
        raise ContractViolation(f"mixed checkpoint steps in one gap: {sorted(steps)}")
    good = [p.nll_good for p in pairs]
    bad = [p.nll_bad for p in pairs]
    if aggregate == "sum_ppl":
        # log(sum exp(nll)) computed stably; exp(nll) may overflow for large NLLs
        return _logsumexp(good) - _logsumexp(bad)
    if aggregate == "mean_log":
        return math.fsum(good) / len(good) - math.fsum(bad) / len(bad)
    raise ValueError(f"unknown aggregate {aggregate!r}")


def build_gap_series(scores: Iterable[PairScore], aggregate: str = "sum_ppl") -> GapSeries:
    scores = list(scores)
    if not scores:
        raise InsufficientDataError("no scores")
    names = {s.class_name for s in scores}
    if len(names) != 1:
        raise ContractViolation(f"scores span several classes: {sorted(names)}")
    (name,) = names
    by_step = defaultdict(list)
    seen = set()
    for s in scores:
        k = (s.pair_id, s.checkpoint_step)
        if k in seen:
            raise ContractViolation(
                f"{name}: duplicate record for pair {s.pair_id} at step {s.checkpoint_step}",
                subject=name,
            )
        seen.add(k)
        by_step[s.checkpoint_step].append(s)
    steps = sorted(by_step)
    if len(steps) < MIN_SERIES_LENGTH:
        raise InsufficientDataError(
            f"{name}: need >= {MIN_SERIES_LENGTH} checkpoints, got {len(steps)}",
            subject=name,
        )
    # fixed pair order inside each step so the result is independent of input order
    gaps = [
        gap_at_checkpoint(sorted(by_step[t], key=lambda p: p.pair_id), aggregate)
        for t in steps
    ]
    return GapSeries(name, steps, gaps)


def group_by_class(scores: Iterable[PairScore]) -> dict[str, list[PairScore]]:
    out = defaultdict(list)
    for s in scores:
        out[s.class_name].append(s)
    return dict(sorted(out.items()))


def build_all_series(scores: Iterable[PairScore], aggregate: str = "sum_ppl") -> dict[str, GapSeries]:
    return {
        name: build_gap_series(group, aggregate)
        for name, group in group_by_class(scores).items()
    }


def accuracy_by_step(scores: Iterable[PairScore]) -> dict[int, float]:
    """Per-checkpoint accuracy for one class."""
    by_step = defaultdict(list)
    for s in scores:
        by_step[s.checkpoint_step].append(
            (perplexity(s.nll_good), perplexity(s.nll_bad))
        )
    return {t: class_accuracy(by_step[t]) for t in sorted(by_step)}


def final_accuracy(scores: Iterable[PairScore], last: int = 3) -> float:
    """Accuracy averaged over the last ``last`` checkpoints."""
    acc = accuracy_by_step(scores)
    tail = list(acc.values())[-last:]
    return math.fsum(tail) / len(tail)


def _segment_size(frac, T):
    # the epsilon keeps e.g. 0.3 * 30 from flooring to 8 through rounding
    return max(1, math.floor(frac * T + 1e-9))


def segment_means(series: GapSeries, early_frac: float = 0.3, late_frac: float = 0.3) -> SegmentMeans:
    if not (0 < early_frac and 0 < late_frac and early_frac + late_frac <= 1):
        raise DomainError(f"bad segment fractions ({early_frac}, {late_frac})")
    T = len(series)
    n_early = _segment_size(early_frac, T)
    n_late = _segment_size(late_frac, T)
    g = np.asarray(series.gaps)
    return SegmentMeans(
        early_mean=float(np.mean(g[:n_early])),
        late_mean=float(np.mean(g[T - n_late:])),
        n_early=n_early,
        n_late=n_late,
    )


def categorize(means: SegmentMeans) -> TrajectoryCategory:
    # an exact zero counts as positive (the erroneous side)
    early_pos = means.early_mean >= 0
    late_pos = means.late_mean >= 0
    if early_pos and late_pos:
        return TrajectoryCategory.EES
    if not early_pos and not late_pos:
        return TrajectoryCategory.CES
    if early_pos:
        return TrajectoryCategory.CLS
    return TrajectoryCategory.ELS
