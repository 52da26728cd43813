"""Pipeline orchestration: turns scores, fixtures, corpora and checkpoints
into report tables and plots.

Every stage returns an ``io.Table``; the intermediate tables double as the
input format of the later CLI subcommands, so long jobs can be resumed.
"""

from __future__ import annotations

import contextlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

from . import io as gio
from .changepoint import (ChangePointResult, CostKind, Signal, cusum_detect,
                          default_penalty, median_heuristic_bandwidth, segmentation_detect, trim_count)
from .errors import GramTrajError, ValidationError
from .ngram import bigram_hypothesis_test, read_corpus, train
from .plots import plot_accuracy_comparison, plot_correlation_grid, plot_gap_trajectory
from .spectral import spectral_report
from .stats import kruskal_wallis, one_way_anova, pairwise_t
from .trajectory import (GapSeries, accuracy_by_step, build_gap_series,
                         categorize, final_accuracy, group_by_class, segment_means)

CATEGORY_ORDER = ("CES", "CLS", "EES", "ELS")
OWN_MODEL = "trained"


@dataclass
class RunConfig:
    scores: Path | None = None
    fixture: Path | None = None
    corpus: Path | None = None
    pairs: Path | None = None
    checkpoints: Path | None = None
    baselines: Path | None = None
    out: Path = Path("gramtraj-out")
    trim_frac: float = 0.1
    penalty: float | str = "auto"
    cost: str = "rbf"
    method: str = "binseg"
    bandwidth: float | None = None  # None: median heuristic per class
    order: int = 2
    addk: float = 0.5
    backoff: float = 0.4
    lowercase: bool = True
    early_frac: float = 0.3
    late_frac: float = 0.3
    tau: float = 0.99
    heads: int | None = None
    aggregate: str = "sum_ppl"
    pooled: bool = False
    formats: tuple = ("json", "csv")
    plots: bool = True

    def validate(self):
        if not 0 <= self.trim_frac < 0.5:
            raise ValidationError(f"trim fraction {self.trim_frac} outside [0, 0.5)")
        if not (0 < self.early_frac and 0 < self.late_frac and self.early_frac + self.late_frac <= 1):
            raise ValidationError("early/late fractions must be positive and sum to <= 1")
        if not 0 < self.tau <= 1:
            raise ValidationError(f"tau {self.tau} outside (0, 1]")
        if self.penalty != "auto" and float(self.penalty) < 0:
            raise ValidationError("penalty must be >= 0 or 'auto'")
        if self.cost not in ("l2", "rbf"):
            raise ValidationError(f"unknown cost {self.cost!r}")
        if self.method not in ("binseg", "pelt"):
            raise ValidationError(f"unknown method {self.method!r}")
        if self.order not in (1, 2, 3):
            raise ValidationError(f"order must be 1, 2 or 3, got {self.order}")
        if self.addk < 0 or not 0 < self.backoff <= 1:
            raise ValidationError("addk must be >= 0 and backoff in (0, 1]")
        for name in ("scores", "fixture", "corpus", "pairs", "checkpoints", "baselines"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise FileNotFoundError(f"--{name}: path does not exist: {p}")
        return self


@contextlib.contextmanager
def stage(module: str, subject: str | None = None):
    """Tag errors escaping the block with the stage name and offending item."""
    try:
        yield
    except GramTrajError as exc:
        if exc.module == "gramtraj":
            exc.module = module
        if exc.subject is None:
            exc.subject = subject
        raise
    except (ValueError, ArithmeticError) as exc:
        err = ValidationError(str(exc), module=module, subject=subject)
        raise err from exc


# -- gaps -------------------------------------------------------------------


def gap_table(scores, aggregate: str = "sum_ppl") -> tuple[gio.Table, dict[str, GapSeries], dict[str, float]]:
    """Gap and accuracy per (class, step), plus the series and final accuracies."""
    rows, series, final = [], {}, {}
    for name, group in group_by_class(scores).items():
        with stage("trajectory", name):
            s = build_gap_series(group, aggregate)
            acc = accuracy_by_step(group)
            final[name] = final_accuracy(group)
        series[name] = s
        rows += [[name, t, g, acc[t]] for t, g in zip(s.steps, s.gaps)]
    return gio.Table("gaps", ["class", "step", "gap", "accuracy"], rows), series, final


def series_from_table(table: gio.Table) -> dict[str, GapSeries]:
    by_class = {}
    for rec in table.records():
        by_class.setdefault(rec["class"], []).append((int(rec["step"]), float(rec["gap"])))
    out = {}
    for name in sorted(by_class):
        pts = sorted(by_class[name])
        with stage("trajectory", name):
            out[name] = GapSeries(name, [p[0] for p in pts], [p[1] for p in pts])
    return out


def accuracy_from_table(table: gio.Table, last: int = 3) -> dict[str, float]:
    by_class = {}
    for rec in table.records():
        if rec.get("accuracy") is not None:
            by_class.setdefault(rec["class"], []).append((int(rec["step"]), float(rec["accuracy"])))
    out = {}
    for name, pts in sorted(by_class.items()):
        tail = [a for _, a in sorted(pts)][-last:]
        out[name] = math.fsum(tail) / len(tail)
    return out


# -- change points ---------------------------------------------------------------


def detect_class(series: GapSeries, cfg: RunConfig) -> tuple[ChangePointResult, ChangePointResult]:
    sig = Signal.from_series(series)
    cus = cusum_detect(sig, cfg.trim_frac)
    seg = segmentation_detect(sig, cost=cfg.cost, penalty=cfg.penalty, method=cfg.method,
                              trim_frac=cfg.trim_frac, bandwidth=cfg.bandwidth)
    return cus, seg


def _cost_description(series: GapSeries, cfg: RunConfig):
    sig = Signal.from_series(series)
    T = len(sig)
    m = trim_count(T, cfg.trim_frac) if cfg.trim_frac > 0 else 0
    inner = Signal(sig.values[m:T - m], sig.steps[m:T - m])
    if cfg.cost == "rbf":
        kind = CostKind.rbf(cfg.bandwidth or median_heuristic_bandwidth(inner))
    else:
        kind = CostKind.l2()
    pen = default_penalty(inner) if cfg.penalty == "auto" else float(cfg.penalty)
    return kind.label(), pen


CHANGEPOINT_COLUMNS = [
    "class", "cusum_index", "cusum_step", "cusum_statistic",
    "ruptures_detected", "ruptures_index", "ruptures_step", "ruptures_statistic",
    "regime", "mean_gap", "std_gap", "breakpoints", "method", "cost", "penalty",
]


def changepoint_table(series: Mapping[str, GapSeries], cfg: RunConfig) -> gio.Table:
    rows = []
    for name in sorted(series):
        with stage("changepoint", name):
            cus, seg = detect_class(series[name], cfg)
            cost_label, pen = _cost_description(series[name], cfg)
        rows.append([
            name, cus.index, cus.step, cus.statistic,
            seg.detected, seg.index, seg.step, seg.statistic,
            seg.regime, seg.mean_gap, seg.std_gap,
            ";".join(str(series[name].steps[k]) for k in seg.breakpoints),
            cfg.method, cost_label, pen,
        ])
    return gio.Table("changepoints", CHANGEPOINT_COLUMNS, rows)


# -- categories -----------------------------------------------------------------


def category_table(series: Mapping[str, GapSeries], cfg: RunConfig,
                   final_acc: Mapping[str, float] | None = None) -> gio.Table:
    rows = []
    for name in sorted(series):
        with stage("trajectory", name):
            m = segment_means(series[name], cfg.early_frac, cfg.late_frac)
            cat = categorize(m)
        acc = final_acc.get(name) if final_acc else None
        rows.append([name, m.early_mean, m.late_mean, m.n_early, m.n_late, cat.value, acc])
    return gio.Table("categories",
                     ["class", "early_mean", "late_mean", "n_early", "n_late", "category",
                      "final_accuracy"], rows)


# -- summaries and statistics ------------------------------------------------------


@dataclass(frozen=True)
class PatternSummary:
    pattern: str
    n: int
    avg_cusum_step: float
    avg_ruptures_step: float | None
    n_ruptures: int = 0


def _mean(xs):
    return math.fsum(xs) / len(xs) if xs else None


def summarize_patterns(categories: Mapping[str, object],
                       changepoints: Mapping[str, tuple]) -> list[PatternSummary]:
    """One row per pattern present, with mean CUSUM and segmentation steps.

    ``changepoints`` maps class -> (cusum_step, ruptures_step); a ``None``
    ruptures step (no breakpoint) is left out of that column's mean.
    """
    if set(categories) != set(changepoints):
        only_c = sorted(set(categories) - set(changepoints))
        only_p = sorted(set(changepoints) - set(categories))
        raise ValidationError(
            f"class sets differ: only categorized {only_c}, only change points {only_p}",
            module="report")
    groups = {}
    for name in sorted(categories):
        groups.setdefault(str(categories[name]), []).append(name)
    out = []
    for pat in CATEGORY_ORDER:
        names = groups.get(pat)
        if not names:
            continue
        cus = [float(changepoints[n][0]) for n in names]
        rup = [float(changepoints[n][1]) for n in names if changepoints[n][1] is not None]
        out.append(PatternSummary(pat, len(names), _mean(cus), _mean(rup), len(rup)))
    return out


def _display(x):
    return "" if x is None else f"{round(x):,}"


def summary_table(summaries, name="patterns") -> gio.Table:
    rows = [[s.pattern, s.n, s.avg_cusum_step, s.avg_ruptures_step, s.n_ruptures,
             _display(s.avg_cusum_step), _display(s.avg_ruptures_step)] for s in summaries]
    return gio.Table(name, ["pattern", "n", "avg_cusum_step", "avg_ruptures_step", "n_ruptures",
                            "avg_cusum_display", "avg_ruptures_display"], rows)


def format_summary(summaries) -> str:
    """Plain-text rendering in the layout of the published summary table."""
    lines = [f"{'Pattern':<8}{'n':>4}{'Avg CUSUM':>12}{'Avg Ruptures':>14}"]
    for s in summaries:
        lines.append(f"{s.pattern:<8}{s.n:>4}{_display(s.avg_cusum_step):>12}"
                     f"{_display(s.avg_ruptures_step):>14}")
    return "\n".join(lines)


def step_groups(categories, changepoints, which: int) -> dict[str, list[float]]:
    groups = {}
    for name in sorted(categories):
        v = changepoints[name][which]
        if v is not None:
            groups.setdefault(str(categories[name]), []).append(float(v))
    return {p: groups[p] for p in CATEGORY_ORDER if p in groups}


STATS_COLUMNS = ["measure", "test", "comparison", "statistic", "df1", "df2", "p_value", "note"]


def stats_rows(groups: Mapping[str, list], measure: str, pooled: bool = False) -> list:
    rows = []
    usable = {k: v for k, v in groups.items() if len(v) >= 1}
    label = "/".join(usable)
    if len(usable) >= 2 and sum(map(len, usable.values())) > len(usable):
        try:
            r = one_way_anova(usable)
            rows.append([measure, "one_way_anova", label, r.statistic, r.df[0], r.df[1], r.p_value, ""])
        except ValidationError as exc:
            rows.append([measure, "one_way_anova", label, None, None, None, None, str(exc)])
    two_plus = {k: v for k, v in usable.items() if len(v) >= 2}
    variant = "pooled variance" if pooled else "Welch"
    for (a, b), r in pairwise_t(two_plus, pooled=pooled).items():
        rows.append([measure, r.test, f"{a} vs {b}", r.statistic, r.df[0], None, r.p_value, variant])
    if len(usable) >= 2 and sum(map(len, usable.values())) >= 5:
        r = kruskal_wallis(usable)
        rows.append([measure, "kruskal_wallis", label, r.statistic, r.df[0], None, r.p_value,
                     "tie-corrected"])
    return rows


def stats_table(categories, changepoints, pooled=False, name="stats") -> gio.Table:
    rows = []
    with stage("stats"):
        rows += stats_rows(step_groups(categories, changepoints, 0), "cusum_step", pooled)
        rows += stats_rows(step_groups(categories, changepoints, 1), "ruptures_step", pooled)
    return gio.Table(name, STATS_COLUMNS, rows)


def fixture_maps(records):
    categories = {r.class_name: r.category.value for r in records}
    changepoints = {r.class_name: (r.cusum_step, r.ruptures_step) for r in records}
    if len(categories) != len(records):
        raise ValidationError("fixture has duplicate class names", module="io")
    return categories, changepoints


def maps_from_tables(cp_table: gio.Table, cat_table: gio.Table):
    changepoints = {r["class"]: (r["cusum_step"], r["ruptures_step"] if r["ruptures_detected"] else None)
                    for r in cp_table.records()}
    categories = {r["class"]: r["category"] for r in cat_table.records()}
    return categories, changepoints


# -- bigram hypothesis ------------------------------------------------------------


BIGRAM_COLUMNS = ["class", "order", "category", "ngram_gap", "ngram_gap_sign", "neural_late_sign",
                  "agrees", "pair_error_rate", "pair_majority_agrees"]


def bigram_tables(cfg: RunConfig, series: Mapping[str, GapSeries]):
    with stage("ngram"):
        model = train(read_corpus(cfg.corpus), cfg.order, cfg.addk, cfg.backoff, cfg.lowercase)
        pairs = gio.read_pairs(cfg.pairs)
        report = bigram_hypothesis_test(model, pairs, series, cfg.early_frac, cfg.late_frac)
    rows = [[v.class_name, v.order, v.category, v.ngram_gap_value, v.ngram_gap_sign,
             v.neural_late_sign, v.agrees, v.pair_error_rate, v.pair_majority_agrees]
            for v in report.verdicts]
    summary_rows = [[int(order), cat, c["agree"], c["disagree"], ""]
                    for order, cats in report.summary().items() for cat, c in cats.items()]
    summary_rows += [[None, "skipped", None, None, name] for name in report.skipped]
    return (gio.Table("bigram", BIGRAM_COLUMNS, rows),
            gio.Table("bigram_summary", ["order", "category", "agree", "disagree", "skipped_class"],
                      summary_rows),
            model)


# -- spectral -------------------------------------------------------------------


SPECTRAL_COLUMNS = ["step", "layer", "kind", "head", "status", "frobenius", "entry_mean", "entry_std",
                    "sigma_max", "sigma_min", "condition", "effective_rank"]


def spectral_tables(cfg: RunConfig):
    with stage("spectral"):
        matrices, gaps = gio.load_checkpoints(cfg.checkpoints)
        summary, cosine, qk = spectral_report(matrices, gaps, tau=cfg.tau, n_heads=cfg.heads)
    return (
        gio.Table("spectral_summary", SPECTRAL_COLUMNS,
                  [[r.get(c) for c in SPECTRAL_COLUMNS] for r in summary]),
        gio.Table("spectral_cosine", ["step_prev", "step", "layer", "kind", "cosine"],
                  [[r["step_prev"], r["step"], r["layer"], r["kind"], r["cosine"]] for r in cosine]),
        gio.Table("spectral_qk", ["step", "layer", "qk_ratio"],
                  [[r["step"], r["layer"], r["qk_ratio"]] for r in qk]),
    )


# -- baselines ------------------------------------------------------------------


def read_baselines(path) -> dict[str, dict[str, float]]:
    """CSV with a ``class`` column and one accuracy column (0-100) per model."""
    import csv
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or reader.fieldnames[0] != "class":
            raise ValidationError(f"{path}: first column must be 'class'", module="io")
        out = {m: {} for m in reader.fieldnames[1:]}
        for lineno, row in enumerate(reader, 2):
            for m in out:
                try:
                    out[m][row["class"]] = float(row[m])
                except (TypeError, ValueError):
                    raise ValidationError(f"{path}: line {lineno}: bad accuracy for {m}",
                                          module="io") from None
    return out


def correlation_table(accuracies, reference=OWN_MODEL) -> gio.Table:
    from .stats import pearson, spearman
    rows = []
    x_classes = sorted(accuracies[reference])
    x = [accuracies[reference][k] for k in x_classes]
    for m in sorted(accuracies):
        if m == reference:
            continue
        y = [accuracies[m][k] for k in x_classes]
        with stage("stats", m):
            rows.append([reference, m, len(x), pearson(x, y), spearman(x, y)])
    return gio.Table("correlations", ["reference", "model", "n_classes", "pearson", "spearman"], rows)


# -- pipeline -------------------------------------------------------------------


@dataclass
class Bundle:
    out: Path
    tables: dict = field(default_factory=dict)
    plots: list = field(default_factory=list)

    def add(self, table: gio.Table):
        self.tables[table.name] = table


def write_bundle(bundle: Bundle, cfg: RunConfig, plots: dict[str, str]):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in sorted(bundle.tables):
        for fmt in cfg.formats:
            gio.write_report(bundle.tables[name], out / f"{name}.{fmt}", fmt)
    if plots:
        pdir = out / "plots"
        pdir.mkdir(exist_ok=True)
        for fname in sorted(plots):
            (pdir / fname).write_text(plots[fname], encoding="utf-8")
    manifest = {
        "tables": sorted(bundle.tables),
        "plots": sorted(plots),
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in asdict(cfg).items()
                   if k != "out"},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n",
                                       encoding="utf-8")


def _safe_filename(name):
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def run_pipeline(cfg: RunConfig) -> Bundle:
    """Run every stage the config has inputs for and write the report bundle."""
    cfg.validate()
    bundle = Bundle(Path(cfg.out))
    plots = {}

    if cfg.fixture is not None:
        with stage("io", str(cfg.fixture)):
            records = gio.read_fixture_changepoints(cfg.fixture)
        cats, cps = fixture_maps(records)
        bundle.add(summary_table(summarize_patterns(cats, cps), "fixture_patterns"))
        bundle.add(stats_table(cats, cps, cfg.pooled, "fixture_stats"))

    if cfg.scores is not None:
        with stage("io", str(cfg.scores)):
            scores = gio.read_scores(cfg.scores)
        gaps, series, final_acc = gap_table(scores, cfg.aggregate)
        bundle.add(gaps)
        cp = changepoint_table(series, cfg)
        cat = category_table(series, cfg, final_acc)
        bundle.add(cp)
        bundle.add(cat)
        cats, cps = maps_from_tables(cp, cat)
        bundle.add(summary_table(summarize_patterns(cats, cps)))
        bundle.add(stats_table(cats, cps, cfg.pooled))

        if cfg.plots:
            for name in sorted(series):
                cus = cusum_detect(Signal.from_series(series[name]), cfg.trim_frac)
                plots[f"gap_{_safe_filename(name)}.svg"] = plot_gap_trajectory(series[name], cus)
            accuracies = {OWN_MODEL: final_acc}
            if cfg.baselines is not None:
                base = read_baselines(cfg.baselines)
                shared = set(final_acc)
                for m in base:
                    shared &= set(base[m])
                accuracies = {m: {k: v[k] for k in sorted(shared)}
                              for m, v in {OWN_MODEL: final_acc, **base}.items()}
                bundle.add(correlation_table(accuracies))
                plots["accuracy_correlation_grid.svg"] = plot_correlation_grid(accuracies, OWN_MODEL)
            plots["accuracy_comparison.svg"] = plot_accuracy_comparison(accuracies, OWN_MODEL)

        if cfg.corpus is not None and cfg.pairs is not None:
            verdicts, summary, _ = bigram_tables(cfg, series)
            bundle.add(verdicts)
            bundle.add(summary)

    if cfg.checkpoints is not None:
        for t in spectral_tables(cfg):
            bundle.add(t)

    if not bundle.tables:
        raise ValidationError("nothing to do: give --scores, --fixture or --checkpoints",
                              module="cli")
    write_bundle(bundle, cfg, plots)
    bundle.plots = sorted(plots)
    return bundle
