"""End-to-end acceptance checks.

Each criterion is a function returning ``(passed, detail)``. Under pytest every
criterion prints one ``PASS``/``FAIL`` line and then asserts; running this
file directly prints the same lines without pytest.
"""

import hashlib
import json
import math
import sys
import tempfile
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest

from gramtraj import cli
from gramtraj import io as gio
from gramtraj import report as rp
from gramtraj.changepoint import (CostKind, Signal, binseg, cost_l2, cusum_detect,
                                  exhaustive_segmentation, pelt, segmentation_objective)
from gramtraj.ngram import bigram_hypothesis_test, read_corpus, sentence_nll, train
from gramtraj.spectral import effective_rank, frobenius, qk_ratio, singular_values
from gramtraj.trajectory import build_all_series, categorize, segment_means

FIXTURE = gio.bundled("blimp_changepoints.csv")
SCORES = gio.bundled("synthetic_scores.jsonl")


def _run_cli(*argv):
    code = cli.main([str(a) for a in argv])
    if code != 0:
        raise RuntimeError(f"gramtraj {' '.join(map(str, argv))} exited with {code}")


# -- 1 ---------------------------------------------------------------------------


def criterion_1():
    expected = {"CES": (34, 7351, 6234), "CLS": (9, 20367, 6994), "EES": (24, 5542, 6798)}
    with tempfile.TemporaryDirectory() as tmp:
        t0 = time.perf_counter()
        _run_cli("report", "--fixture", FIXTURE, "--out", tmp, "--format", "json")
        elapsed = time.perf_counter() - t0
        rows = {r["pattern"]: r for r in gio.read_report(Path(tmp) / "patterns.json").records()}
    ok = set(rows) == set(expected) and elapsed < 1.0
    for pat, (n, cus, rup) in expected.items():
        r = rows.get(pat)
        ok = ok and r is not None and r["n"] == n
        ok = ok and abs(r["avg_cusum_step"] - cus) <= 1 and abs(r["avg_ruptures_step"] - rup) <= 1
    got = ", ".join(f"{p} n={r['n']} cusum={r['avg_cusum_step']:.2f} rupt={r['avg_ruptures_step']:.2f}"
                    for p, r in sorted(rows.items()))
    return ok, f"{got}; {elapsed:.3f}s"


# -- 2, 3 --------------------------------------------------------------------------


def _fixture_stats():
    cats, cps = rp.fixture_maps(gio.read_fixture_changepoints(FIXTURE))
    return rp.stats_table(cats, cps).records()


def criterion_2():
    (row,) = [r for r in _fixture_stats()
              if r["measure"] == "cusum_step" and r["test"] == "one_way_anova"]
    df = (row["df1"], row["df2"])
    ok = df == (2, 64) and row["p_value"] < 0.005 and abs(row["statistic"] - 8.25) <= 0.01
    return ok, f"F{df} = {row['statistic']:.4f}, p = {row['p_value']:.6f}"


def criterion_3():
    (row,) = [r for r in _fixture_stats()
              if r["measure"] == "cusum_step" and r["test"] == "kruskal_wallis"]
    ok = abs(row["statistic"] - 11.89) <= 0.05 and row["p_value"] < 0.01
    return ok, f"H = {row['statistic']:.4f}, p = {row['p_value']:.6f}"


# -- 4 ---------------------------------------------------------------------------


def _single_split_argmin(y, min_size=2):
    T = len(y)
    best_k, best = None, math.inf
    for k in range(min_size, T - min_size + 1):
        c = cost_l2(y[:k]) + cost_l2(y[k:])
        if c < best:
            best_k, best = k, c
    return best_k


def criterion_4():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    pelt_bad = 0
    for _ in range(1000):
        T = int(rng.integers(5, 13))
        y = rng.normal(size=T) + np.repeat(rng.normal(0, 3, size=3), [T // 3, T // 3, T - 2 * (T // 3)])
        sig = Signal.from_values(y)
        cost = CostKind.l2()
        pen = float(rng.uniform(0.05, 5.0))
        got = segmentation_objective(sig.values, pelt(sig, cost, pen), cost, pen)
        opt, _ = exhaustive_segmentation(sig, cost, pen)
        if got != opt:
            pelt_bad += 1
    bs_bad = 0
    for _ in range(1000):
        T = int(rng.integers(5, 21))
        y = rng.normal(size=T) * rng.uniform(0.1, 10)
        got = binseg(Signal.from_values(y), CostKind.l2(), max_breakpoints=1, penalty=0.0)
        if got != [_single_split_argmin(y)]:
            bs_bad += 1
    elapsed = time.perf_counter() - t0
    ok = pelt_bad == 0 and bs_bad == 0 and elapsed < 30
    return ok, f"PELT mismatches {pelt_bad}/1000, Binseg mismatches {bs_bad}/1000, {elapsed:.1f}s"


# -- 5 ---------------------------------------------------------------------------


def criterion_5():
    rng = np.random.default_rng(5)
    failures = []
    for i in range(500):
        T = int(rng.integers(8, 40))
        y = rng.normal(size=T)
        base = cusum_detect(Signal.from_values(y))
        c = float(rng.uniform(-100, 100))
        a = float(rng.uniform(0.1, 10)) * (1 if rng.random() < 0.5 else -1)
        moved = cusum_detect(Signal.from_values(y + c))
        scaled = cusum_detect(Signal.from_values(a * y))
        if moved.index != base.index or abs(moved.statistic - base.statistic) > 1e-9:
            failures.append(f"translation #{i}")
        if scaled.index != base.index or abs(scaled.statistic - abs(a) * base.statistic) > 1e-9 * abs(a):
            failures.append(f"scale #{i}")
        m = max(2, math.ceil(0.1 * T))
        k = int(rng.integers(m, T - m + 1))
        h = float(rng.uniform(-50, 50))
        lvl = float(rng.uniform(-10, 10))
        step = cusum_detect(Signal.from_values(np.r_[np.full(k, lvl), np.full(T - k, lvl + h)]))
        if step.index != k or abs(step.statistic - abs(h)) > 1e-12 * max(1.0, abs(h)):
            failures.append(f"step #{i}")
    return not failures, f"{len(failures)} failures over 500 signals {failures[:3]}"


# -- 6 ---------------------------------------------------------------------------


def criterion_6():
    labels = json.loads(gio.bundled("synthetic_labels.json").read_text())
    with tempfile.TemporaryDirectory() as tmp:
        _run_cli("all", "--scores", SCORES, "--out", tmp, "--format", "json", "--no-plots")
        cats = {r["class"]: r["category"] for r in gio.read_report(Path(tmp) / "categories.json").records()}
        patterns = [r["pattern"] for r in gio.read_report(Path(tmp) / "patterns.json").records()]
    agree = sum(cats.get(k) == v for k, v in labels.items())
    ok = len(labels) == 10 and agree == 10 and set(cats) == set(labels) and "ELS" not in patterns
    return ok, f"{agree}/{len(labels)} planted labels recovered; pattern rows {patterns}"


# -- 7 ---------------------------------------------------------------------------


def criterion_7():
    problems = []
    corpus = read_corpus(gio.bundled("synthetic_corpus.txt"))
    for order in (1, 2, 3):
        m = train(corpus, order=order, addk=0.5)
        contexts = [c for c in m.context_counts if len(c) == order - 1]
        for ctx in contexts:
            s = math.fsum(m.prob(w, ctx) for w in m.vocab)
            if abs(s - 1.0) > 1e-9:
                problems.append(f"order {order} context {ctx} sums to {s!r}")
    sent = "the quick brown fox jumps over a lazy dog ."
    self_model = train([sent], order=2, addk=0.0)
    total, _ = sentence_nll(self_model, sent)
    if total != 0.0:
        problems.append(f"self NLL {total!r}")

    model = train(corpus, order=2)
    scores = gio.read_scores(SCORES)
    report = bigram_hypothesis_test(model, gio.read_pairs(gio.bundled("synthetic_pairs.jsonl")),
                                    build_all_series(scores))
    expected = json.loads(gio.bundled("synthetic_bigram_expected.json").read_text())
    got = {v.class_name: v.agrees for v in report.verdicts if v.order == 2}
    agree = sum(got.values())
    if got != expected or (agree, len(got) - agree) != (2, 2):
        problems.append(f"verdicts {got} vs planted {expected}")
    return not problems, f"{agree} agree / {len(got) - agree} disagree; {len(problems)} problems {problems[:2]}"


# -- 8 ---------------------------------------------------------------------------


def _faddeev_leverrier(A):
    """Characteristic polynomial coefficients of a square mpmath matrix, highest degree first."""
    n = A.rows
    coeffs = [mpmath.mpf(1)]
    M = mpmath.zeros(n, n)
    I = mpmath.eye(n)
    for k in range(1, n + 1):
        M = A * M + coeffs[-1] * I
        AM = A * M
        c = -sum(AM[i, i] for i in range(n)) / k
        coeffs.append(c)
    return coeffs


def gram_singular_values(W):
    """Singular values as square roots of the Gram-matrix eigenvalues, in high precision."""
    W = np.asarray(W, dtype=float)
    if W.shape[0] < W.shape[1]:
        W = W.T
    with mpmath.workdps(60):
        A = mpmath.matrix(W.tolist())
        G = A.T * A
        roots = mpmath.polyroots(_faddeev_leverrier(G), maxsteps=400, extraprec=400)
        lam = sorted((max(mpmath.re(r), 0) for r in roots), reverse=True)
        return np.array([float(mpmath.sqrt(x)) for x in lam])


def criterion_8():
    rng = np.random.default_rng(8)
    problems = []
    for i in range(200):
        r, c = rng.integers(1, 17, size=2)
        W = rng.normal(size=(r, c)) * rng.uniform(0.01, 100)
        sv = singular_values(W)
        lhs, rhs = frobenius(W) ** 2, math.fsum(sv ** 2)
        if abs(lhs - rhs) > 1e-6 * lhs:
            problems.append(f"frobenius #{i}")
    worst = 0.0
    for i in range(100):
        r, c = rng.integers(1, 9, size=2)
        W = rng.normal(size=(r, c))
        err = float(np.max(np.abs(singular_values(W) - gram_singular_values(W))))
        worst = max(worst, err)
        if err > 1e-8:
            problems.append(f"gram oracle #{i} err {err:.2e}")
    if effective_rank(singular_values(np.eye(100)), 0.99) != 99:
        problems.append("identity effective rank")
    W = rng.normal(size=(12, 12))
    if qk_ratio(W, W) != 1.0:
        problems.append("qk_ratio(W, W)")
    return not problems, f"worst Gram-oracle error {worst:.1e}; {len(problems)} problems {problems[:3]}"


# -- 9 ---------------------------------------------------------------------------


def _tree_hash(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(b"\0")
            h.update(p.read_bytes())
    return h.hexdigest()


def criterion_9():
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp) / "run_a", Path(tmp) / "run_b"
        _run_cli("all", "--bundled", "--out", a)
        _run_cli("all", "--bundled", "--out", b)
        ha, hb = _tree_hash(a), _tree_hash(b)
        n_files = sum(1 for p in a.rglob("*") if p.is_file())
    return ha == hb, f"{n_files} files, sha256 {ha[:16]} vs {hb[:16]}"


# -- 10 --------------------------------------------------------------------------


def criterion_10():
    scores = gio.read_scores(SCORES)
    fwd = build_all_series(scores)
    rev = build_all_series([s.swapped() for s in scores])
    flip = {"EES": "CES", "CES": "EES", "CLS": "ELS", "ELS": "CLS"}
    exact = all(rev[k].gaps == tuple(-g for g in fwd[k].gaps) for k in fwd)
    swaps = all(
        categorize(segment_means(rev[k])).value == flip[categorize(segment_means(fwd[k])).value]
        for k in fwd
    )
    return exact and swaps and set(fwd) == set(rev), \
        f"gaps negated exactly: {exact}; categories swapped: {swaps}; {len(fwd)} classes"


CRITERIA = [
    (1, "fixture summary table reproduction", criterion_1),
    (2, "ANOVA degrees of freedom and F", criterion_2),
    (3, "Kruskal-Wallis H", criterion_3),
    (4, "change-point oracle equivalence", criterion_4),
    (5, "CUSUM property suite", criterion_5),
    (6, "trajectory taxonomy end to end", criterion_6),
    (7, "n-gram suite", criterion_7),
    (8, "spectral suite", criterion_8),
    (9, "bundle determinism", criterion_9),
    (10, "gap antisymmetry", criterion_10),
]


def _line(num, title, ok, detail):
    return f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2} {title}: {detail}"


@pytest.mark.parametrize("num,title,check", CRITERIA, ids=[f"criterion_{n}" for n, _, _ in CRITERIA])
def test_criterion(num, title, check, capsys):
    ok, detail = check()
    with capsys.disabled():
        print("\n" + _line(num, title, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = []
    for num, title, check in CRITERIA:
        ok, detail = check()
        results.append(ok)
        print(_line(num, title, ok, detail))
    sys.exit(0 if all(results) else 1)
