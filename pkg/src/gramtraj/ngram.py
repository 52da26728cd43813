"""Count-based n-gram model (orders 1-3) with add-k / stupid-backoff smoothing,
and the bigram-loss test of whether adjacent-word statistics predict a
class's late-training preference.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import DomainError, ValidationError
from .trajectory import GapSeries, categorize, segment_means

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
SENTINELS = (BOS, EOS, UNK)

_PUNCT = ".,;:!?\"'()"
_TOKEN_RE = re.compile(r"[%s]|[^\s%s]+" % (re.escape(_PUNCT), re.escape(_PUNCT)))


class EmptySentenceError(ValidationError):
    pass


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    """Whitespace tokens with punctuation split off, wrapped in BOS/EOS.

    >>> tokenize("Robert has saluted.")
    ['<s>', 'robert', 'has', 'saluted', '.', '</s>']
    """
    if lowercase:
        text = text.lower()
    words = _TOKEN_RE.findall(text)
    if not words:
        raise EmptySentenceError(f"empty sentence: {text!r}")
    for w in words:
        if w in SENTINELS:
            raise ValidationError(f"sentence contains reserved token {w!r}")
    return [BOS, *words, EOS]


@dataclass
class NGramModel:
    order: int
    counts: Counter
    context_counts: Counter
    vocab: frozenset
    addk: float = 0.5
    backoff: float = 0.4
    lowercase: bool = True

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise DomainError(f"order must be 1, 2 or 3 (got {self.order})")
        if not 0 < self.backoff <= 1:
            raise DomainError(f"backoff factor must lie in (0, 1] (got {self.backoff})")
        if self.addk < 0:
            raise DomainError(f"addk must be >= 0 (got {self.addk})")

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def n_tokens(self) -> int:
        return self.context_counts[()]

    def count(self, *ngram) -> int:
        return self.counts.get(tuple(ngram), 0)

    def prob(self, token: str, context: Sequence[str] = ()) -> float:
        """P(token | context) under add-k smoothing with stupid backoff.

        A seen context gives ``(count + k) / (context_count + k * V)``; an
        unseen context (or a zero estimate when k = 0) falls back to the
        context shortened by one, discounted by ``backoff``.
        """
        if token not in self.vocab:
            token = UNK
        context = tuple(w if w in self.vocab or w == BOS else UNK for w in context)
        if self.order == 1:
            context = ()
        else:
            context = context[-(self.order - 1):]
        return self._prob(token, context)

    def _prob(self, token, context):
        if not context:
            c = self.counts.get((token,), 0)
            N = self.n_tokens
            if self.addk > 0:
                return (c + self.addk) / (N + self.addk * self.vocab_size)
            if c > 0:
                return c / N
            # unsmoothed model: unseen words still get a small nonzero mass
            return 1.0 / (N + self.vocab_size)
        c_ctx = self.context_counts.get(context, 0)
        c = self.counts.get(context + (token,), 0)
        if c_ctx > 0 and c + self.addk > 0:
            return (c + self.addk) / (c_ctx + self.addk * self.vocab_size)
        return self.backoff * self._prob(token, context[1:])

    def dump(self) -> str:
        """Sorted ``tok<TAB>tok<TAB>count`` listing of every stored n-gram."""
        lines = [
            "\t".join(ngram) + f"\t{c}"
            for ngram, c in sorted(self.counts.items(), key=lambda kv: (len(kv[0]), kv[0]))
        ]
        return "".join(line + "\n" for line in lines)

    @classmethod
    def from_dump(cls, text: str, addk: float = 0.5, backoff: float = 0.4,
                  lowercase: bool = True) -> "NGramModel":
        counts = Counter()
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            *ngram, c = line.split("\t")
            if not ngram or not c.isdigit():
                raise ValidationError(f"line {lineno}: malformed n-gram dump entry {line!r}")
            counts[tuple(ngram)] = int(c)
        order = max((len(k) for k in counts), default=1)
        return cls(order, counts, _marginals(counts), _vocab(counts), addk, backoff, lowercase)


def _marginals(counts):
    ctx = Counter()
    for ngram, c in counts.items():
        ctx[ngram[:-1]] += c
    return ctx


def _vocab(counts):
    return frozenset({k[0] for k in counts if len(k) == 1} | {UNK})


def train(corpus: Iterable[str], order: int = 2, addk: float = 0.5, backoff: float = 0.4,
          lowercase: bool = True) -> NGramModel:
    """Count every 1..order-gram, including BOS-anchored and EOS-final ones."""
    if order not in (1, 2, 3):
        raise DomainError(f"order must be 1, 2 or 3 (got {order})")
    counts = Counter()
    n_sent = 0
    for sentence in corpus:
        if not sentence.strip():
            continue
        toks = tokenize(sentence, lowercase)
        n_sent += 1
        for i in range(1, len(toks)):
            for n in range(1, order + 1):
                if i - n + 1 < 0:
                    break
                counts[tuple(toks[i - n + 1:i + 1])] += 1
    if n_sent == 0:
        raise ValidationError("training corpus has no sentences")
    return NGramModel(order, counts, _marginals(counts), _vocab(counts), addk, backoff, lowercase)


def read_corpus(path) -> list[str]:
    """One sentence per line, UTF-8; blank lines are skipped."""
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def sentence_nll(model: NGramModel, sentence: str, order: int | None = None) -> tuple[float, float]:
    """Total and per-token NLL (nats) with the context capped at ``order - 1`` words.

    EOS is a predicted token; BOS is not.
    """
    n = order or model.order
    if n > model.order:
        raise DomainError(f"model of order {model.order} cannot score at order {n}")
    toks = tokenize(sentence, model.lowercase)
    total = 0.0
    for i in range(1, len(toks)):
        ctx = toks[max(0, i - n + 1):i]
        total -= math.log(model.prob(toks[i], ctx))
    total = total + 0.0  # normalize -0.0
    return total, total / (len(toks) - 1)


def sentence_nll_bigram(model: NGramModel, sentence: str) -> tuple[float, float]:
    if model.order < 2:
        raise DomainError("bigram loss needs a model of order >= 2")
    return sentence_nll(model, sentence, order=2)


def _logsumexp(xs):
    m = max(xs)
    return m + math.log(math.fsum(math.exp(x - m) for x in xs))


def bigram_class_gap(model: NGramModel, pairs: Sequence[tuple[str, str]], order: int = 2) -> float:
    """log(sum PPL_good) - log(sum PPL_bad) with n-gram perplexities."""
    if len(pairs) == 0:
        raise ValidationError("no sentence pairs")
    good = [sentence_nll(model, g, order)[1] for g, _ in pairs]
    bad = [sentence_nll(model, b, order)[1] for _, b in pairs]
    return _logsumexp(good) - _logsumexp(bad)


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


@dataclass(frozen=True)
class BigramHypothesisVerdict:
    class_name: str
    ngram_gap_sign: int
    neural_late_sign: int
    agrees: bool
    ngram_gap_value: float
    order: int = 2
    category: str = ""
    pair_error_rate: float = 0.0  # fraction of pairs where the n-gram prefers the bad sentence
    pair_majority_agrees: bool = False


@dataclass
class BigramHypothesisReport:
    verdicts: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def summary(self) -> dict:
        """Agree/disagree counts per (order, trajectory category)."""
        out = {}
        for v in self.verdicts:
            cell = out.setdefault(str(v.order), {}).setdefault(v.category, {"agree": 0, "disagree": 0})
            cell["agree" if v.agrees else "disagree"] += 1
        return {o: dict(sorted(c.items())) for o, c in sorted(out.items())}

    def counts(self, order: int = 2) -> tuple[int, int]:
        vs = [v for v in self.verdicts if v.order == order]
        agree = sum(v.agrees for v in vs)
        return agree, len(vs) - agree


def bigram_hypothesis_test(model: NGramModel, class_pairs: Mapping[str, Sequence[tuple[str, str]]],
                           neural_series: Mapping[str, GapSeries], early_frac: float = 0.3,
                           late_frac: float = 0.3) -> BigramHypothesisReport:
    """Compare the sign of each class's n-gram gap with the neural late-segment gap.

    The bigram verdict is always produced; a trigram verdict is added when
    the model has order 3. Classes present in only one mapping are skipped.
    """
    if model.order < 2:
        raise DomainError("hypothesis test needs a model of order >= 2")
    report = BigramHypothesisReport()
    names = sorted(set(class_pairs) | set(neural_series))
    orders = [2, 3] if model.order == 3 else [2]
    for name in names:
        if name not in class_pairs or name not in neural_series:
            report.skipped.append(name)
            continue
        pairs = class_pairs[name]
        means = segment_means(neural_series[name], early_frac, late_frac)
        late_sign = _sign(means.late_mean)
        category = categorize(means).value
        for order in orders:
            gap = bigram_class_gap(model, pairs, order)
            gap_sign = _sign(gap)
            errs = sum(
                sentence_nll(model, g, order)[1] > sentence_nll(model, b, order)[1]
                for g, b in pairs
            )
            rate = errs / len(pairs)
            majority = _sign(rate - 0.5)
            report.verdicts.append(BigramHypothesisVerdict(
                class_name=name,
                ngram_gap_sign=gap_sign,
                neural_late_sign=late_sign,
                agrees=gap_sign != 0 and gap_sign == late_sign,
                ngram_gap_value=gap,
                order=order,
                category=category,
                pair_error_rate=rate,
                pair_majority_agrees=majority != 0 and majority == late_sign,
            ))
    return report
