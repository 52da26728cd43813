"""Regenerate the synthetic datasets shipped in ``gramtraj/data``.

    python scripts/make_bundled_data.py [--out src/gramtraj/data]

Everything is drawn from a seeded generator, so reruns are byte-identical.
The change-point fixture and name map are static files and are not touched.
"""

from __future__ import annotations

import argparse
import json
import shutil
from pathlib import Path

import numpy as np

from gramtraj.io import write_wmat

SEED = 20240611
STEPS = [0, 350, 1250, 1500, 2300, 3050, 3450, 4900, 6350, 6850, 7650, 8200, 9750,
         13000, 15000, 17000, 20000, 22000, 24000, 26000, 28000, 30000]
PAIRS_PER_CLASS = 20

# class -> (planted category, early gap level, late gap level)
# gaps are good minus bad, so negative means the good sentence wins
PLANTED = {
    "ces_determiner_noun": ("CES", -0.30, -0.60),
    "ces_passive_voice": ("CES", -0.15, -0.45),
    "ces_wh_question_gap": ("CES", -0.40, -0.35),
    "ces_transitive_object": ("CES", -0.20, -0.50),
    "ees_plural_agreement": ("EES", 0.25, 0.40),
    "ees_tough_raising": ("EES", 0.35, 0.20),
    "ees_npi_scope": ("EES", 0.10, 0.30),
    "cls_anaphor_gender": ("CLS", 0.20, -0.40),
    "cls_ellipsis_noun": ("CLS", 0.30, -0.30),
    "cls_only_npi_licensor": ("CLS", 0.15, -0.50),
}


def _level(t_frac, early, late, kind):
    if kind == "CLS":
        # hold the wrong preference, then cross zero around mid-training
        w = 1.0 / (1.0 + np.exp(-(t_frac - 0.5) * 14.0))
    else:
        w = t_frac
    return early + (late - early) * w


def make_scores(rng) -> list[dict]:
    rows = []
    span = STEPS[-1] - STEPS[0]
    for name in sorted(PLANTED):
        kind, early, late = PLANTED[name]
        base = rng.uniform(3.0, 5.0, size=PAIRS_PER_CLASS)
        n_good = rng.integers(5, 12, size=PAIRS_PER_CLASS)
        n_bad = n_good + rng.integers(0, 2, size=PAIRS_PER_CLASS)
        for step in STEPS:
            # NLL falls as training goes on, the planted gap rides on top
            decay = 2.0 * np.exp(-step / 6000.0)
            delta = _level((step - STEPS[0]) / span, early, late, kind)
            for pid in range(PAIRS_PER_CLASS):
                jitter = rng.normal(0.0, 0.03, size=2)
                mid = base[pid] + decay
                rows.append({
                    "class_name": name,
                    "pair_id": pid,
                    "checkpoint_step": step,
                    "nll_good": round(float(mid + delta / 2 + jitter[0]), 6),
                    "n_tokens_good": int(n_good[pid]),
                    "nll_bad": round(float(mid - delta / 2 + jitter[1]), 6),
                    "n_tokens_bad": int(n_bad[pid]),
                })
    return rows


NOUNS = ["dog", "cat", "bird", "horse", "teacher", "doctor", "student", "farmer",
         "pilot", "baker", "singer", "driver"]

# four bigram-suite classes; "favours" says which side the corpus bigrams support.
# Agreement with the neural trajectory is planted for the first two only.
BIGRAM_SUITE = {
    "ees_plural_agreement": {
        "good": "the {n}s near the cabinet are old .",
        "bad": "the {n}s near the cabinet is old .",
        "frequent": "the cabinet is old .", "rare": "the cabinet are old .",
        "favours": "bad",
    },
    "ces_determiner_noun": {
        "good": "she saw this {n} today .",
        "bad": "she saw these {n} today .",
        "frequent": "this {n} today .", "rare": "these {n} today .",
        "favours": "good",
    },
    "ees_tough_raising": {
        "good": "the {n} was easy to please .",
        "bad": "the {n} was likely to please .",
        "frequent": "it was easy to please .", "rare": "it was likely to please .",
        "favours": "good",
    },
    "ces_passive_voice": {
        "good": "the {n} was praised by everyone .",
        "bad": "the {n} was smiled by everyone .",
        "frequent": "he was smiled at .", "rare": "he was praised at .",
        "favours": "bad",
    },
}

FILLER = [
    "the {n} sleeps in the barn .",
    "a {n} walked home .",
    "the {n} near the gate waited .",
    "we met the {n} yesterday .",
    "the {n} liked the old cabinet .",
]


def make_bigram_suite(rng) -> tuple[list[str], list[dict]]:
    corpus = []
    for name in sorted(BIGRAM_SUITE):
        entry = BIGRAM_SUITE[name]
        for i in range(40):
            n = NOUNS[i % len(NOUNS)]
            corpus.append(entry["frequent"].format(n=n))
            if i % 10 == 0:
                corpus.append(entry["rare"].format(n=n))
    for i in range(120):
        corpus.append(FILLER[i % len(FILLER)].format(n=NOUNS[int(rng.integers(len(NOUNS)))]))
    order = rng.permutation(len(corpus))
    corpus = [corpus[i] for i in order]

    pairs = []
    for name in sorted(BIGRAM_SUITE):
        entry = BIGRAM_SUITE[name]
        for pid, n in enumerate(NOUNS):
            pairs.append({"class_name": name, "pair_id": pid,
                          "good": entry["good"].format(n=n), "bad": entry["bad"].format(n=n)})
    return corpus, pairs


CKPT_STEPS = [0, 1000, 2000]
LAYERS = 2
DIM = 8


def make_checkpoints(rng, root: Path):
    if root.exists():
        shutil.rmtree(root)
    current = {(layer, kind): rng.normal(0.0, 0.02 * (1 + layer), size=(DIM, DIM))
               for layer in range(LAYERS) for kind in "QKVO"}
    for step in CKPT_STEPS:
        for (layer, kind), W in sorted(current.items()):
            d = root / f"step_{step}" / f"layer_{layer}"
            d.mkdir(parents=True, exist_ok=True)
            write_wmat(W, d / f"{kind.lower()}.wmat")
        # upper layers drift more between checkpoints
        current = {k: W + rng.normal(0.0, 0.005 * (1 + 2 * k[0]), size=W.shape)
                   for k, W in current.items()}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path,
                    default=Path(__file__).resolve().parents[1] / "src" / "gramtraj" / "data")
    args = ap.parse_args(argv)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)

    with open(out / "synthetic_scores.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for row in make_scores(rng):
            fh.write(json.dumps(row) + "\n")
    with open(out / "synthetic_labels.json", "w", encoding="utf-8", newline="\n") as fh:
        labels = {k: v[0] for k, v in sorted(PLANTED.items())}
        json.dump(labels, fh, indent=1, sort_keys=True)
        fh.write("\n")

    corpus, pairs = make_bigram_suite(rng)
    (out / "synthetic_corpus.txt").write_text("\n".join(corpus) + "\n", encoding="utf-8")
    with open(out / "synthetic_pairs.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for row in pairs:
            fh.write(json.dumps(row) + "\n")
    with open(out / "synthetic_bigram_expected.json", "w", encoding="utf-8", newline="\n") as fh:
        expected = {}
        for name, entry in sorted(BIGRAM_SUITE.items()):
            late_sign = -1 if PLANTED[name][0] in ("CES", "CLS") else 1
            ngram_sign = -1 if entry["favours"] == "good" else 1
            expected[name] = ngram_sign == late_sign
        json.dump(expected, fh, indent=1, sort_keys=True)
        fh.write("\n")

    make_checkpoints(rng, out / "checkpoints")
    print(f"wrote synthetic data to {out}")


if __name__ == "__main__":
    main()
