"""``gramtraj`` command line.

Exit codes: 0 success, 1 validation failure, 2 I/O failure, 3 internal
invariant violation. Failures print a one-line JSON error report on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io as gio
from . import report as rp
from .errors import GramTrajError, InvariantViolation, ValidationError

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3


def _penalty(text):
    if text == "auto":
        return "auto"
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"penalty must be a number or 'auto', got {text!r}")
    return v


def _common(p, *inputs):
    for name in inputs:
        p.add_argument(f"--{name}", type=Path, default=None)
    p.add_argument("--out", type=Path, default=Path("gramtraj-out"))
    p.add_argument("--format", choices=["json", "csv", "both"], default="both")


def _detection_opts(p):
    p.add_argument("--trim-frac", type=float, default=0.1)
    p.add_argument("--penalty", type=_penalty, default="auto")
    p.add_argument("--cost", choices=["l2", "rbf"], default="rbf")
    p.add_argument("--method", choices=["binseg", "pelt"], default="binseg")
    p.add_argument("--bandwidth", type=float, default=None,
                   help="RBF bandwidth; default is the median pairwise distance per class")


def _segment_opts(p):
    p.add_argument("--early-frac", type=float, default=0.3)
    p.add_argument("--late-frac", type=float, default=0.3)
    p.add_argument("--aggregate", choices=["sum_ppl", "mean_log"], default="sum_ppl",
                   help="gap aggregation; mean_log is for sensitivity checks only")


def _ngram_opts(p):
    p.add_argument("--order", type=int, choices=[1, 2, 3], default=2)
    p.add_argument("--addk", type=float, default=0.5)
    p.add_argument("--backoff", type=float, default=0.4)
    p.add_argument("--no-lowercase", dest="lowercase", action="store_false")


def _stats_opts(p):
    p.add_argument("--pooled", action="store_true", help="pooled-variance t tests instead of Welch")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gramtraj", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gaps", help="log-perplexity gap and accuracy per class and checkpoint")
    _common(p, "scores")
    _segment_opts(p)

    p = sub.add_parser("changepoint", help="CUSUM and segmentation change points per class")
    _common(p, "scores", "gaps")
    _detection_opts(p)
    _segment_opts(p)

    p = sub.add_parser("categorize", help="EES/CES/CLS/ELS trajectory categories")
    _common(p, "scores", "gaps")
    _segment_opts(p)

    for name, helptext in (("stats", "ANOVA, t tests and Kruskal-Wallis over pattern groups"),
                           ("report", "pattern summary table plus the statistics battery")):
        p = sub.add_parser(name, help=helptext)
        _common(p, "fixture", "changepoints", "categories")
        _stats_opts(p)

    p = sub.add_parser("bigram", help="n-gram test of the bigram hypothesis")
    _common(p, "corpus", "pairs", "scores", "gaps")
    _ngram_opts(p)
    _segment_opts(p)
    p.add_argument("--dump-model", type=Path, default=None, help="write sorted n-gram counts here")

    p = sub.add_parser("spectral", help="weight-matrix spectral diagnostics")
    _common(p, "checkpoints")
    p.add_argument("--tau", type=float, default=0.99)
    p.add_argument("--heads", type=int, default=None)

    p = sub.add_parser("all", help="run every stage the given inputs allow")
    _common(p, "scores", "fixture", "corpus", "pairs", "checkpoints", "baselines")
    p.add_argument("--bundled", action="store_true", help="fill missing inputs with the bundled datasets")
    _detection_opts(p)
    _segment_opts(p)
    _ngram_opts(p)
    _stats_opts(p)
    p.add_argument("--tau", type=float, default=0.99)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--no-plots", dest="plots", action="store_false")
    return parser


def _formats(args):
    return ("json", "csv") if args.format == "both" else (args.format,)


def _config(args, **extra) -> rp.RunConfig:
    fields = rp.RunConfig.__dataclass_fields__
    kw = {k: v for k, v in vars(args).items() if k in fields}
    kw.update(extra)
    kw["formats"] = _formats(args)
    return rp.RunConfig(**kw).validate()


def _write(tables, args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t in tables:
        for fmt in _formats(args):
            gio.write_report(t, out / f"{t.name}.{fmt}", fmt)


def _require(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise ValidationError(f"--{n.replace('_', '-')} is required", module="cli")


def _exists(path):
    if not Path(path).exists():
        raise FileNotFoundError(f"path does not exist: {path}")
    return path


def _series(args, cfg):
    """Gap series from --gaps (a gaps table) or, failing that, from --scores."""
    if getattr(args, "gaps", None) is not None:
        with rp.stage("io", str(args.gaps)):
            table = gio.read_report(_exists(args.gaps))
        return rp.series_from_table(table), rp.accuracy_from_table(table)
    _require(args, "scores")
    with rp.stage("io", str(args.scores)):
        scores = gio.read_scores(args.scores)
    _, series, final = rp.gap_table(scores, cfg.aggregate)
    return series, final


def _category_maps(args):
    if args.fixture is not None:
        with rp.stage("io", str(args.fixture)):
            return rp.fixture_maps(gio.read_fixture_changepoints(_exists(args.fixture)))
    _require(args, "changepoints", "categories")
    with rp.stage("io"):
        cp = gio.read_report(_exists(args.changepoints))
        cat = gio.read_report(_exists(args.categories))
    return rp.maps_from_tables(cp, cat)


def cmd_gaps(args):
    cfg = _config(args)
    _require(args, "scores")
    with rp.stage("io", str(args.scores)):
        scores = gio.read_scores(args.scores)
    table, _, _ = rp.gap_table(scores, cfg.aggregate)
    _write([table], args)


def cmd_changepoint(args):
    cfg = _config(args)
    series, _ = _series(args, cfg)
    _write([rp.changepoint_table(series, cfg)], args)


def cmd_categorize(args):
    cfg = _config(args)
    series, final = _series(args, cfg)
    _write([rp.category_table(series, cfg, final)], args)


def cmd_stats(args):
    cats, cps = _category_maps(args)
    _write([rp.stats_table(cats, cps, args.pooled)], args)


def cmd_report(args):
    cats, cps = _category_maps(args)
    summaries = rp.summarize_patterns(cats, cps)
    stats = rp.stats_table(cats, cps, args.pooled)
    _write([rp.summary_table(summaries), stats], args)
    print(rp.format_summary(summaries))
    for rec in stats.records():
        if rec["statistic"] is None:
            continue
        df = ", ".join(f"{d:.4g}" for d in (rec["df1"], rec["df2"]) if d is not None)
        print(f"{rec['measure']:<14} {rec['test']:<15} {rec['comparison']:<12} "
              f"stat={rec['statistic']:.4g} df=({df}) p={rec['p_value']:.4g}")


def cmd_bigram(args):
    cfg = _config(args)
    _require(args, "corpus", "pairs")
    series, _ = _series(args, cfg)
    verdicts, summary, model = rp.bigram_tables(cfg, series)
    _write([verdicts, summary], args)
    if args.dump_model is not None:
        Path(args.dump_model).write_text(model.dump(), encoding="utf-8")


def cmd_spectral(args):
    _require(args, "checkpoints")
    cfg = _config(args)
    _write(list(rp.spectral_tables(cfg)), args)


def cmd_all(args):
    extra = {}
    if args.bundled:
        defaults = {
            "scores": gio.bundled("synthetic_scores.jsonl"),
            "fixture": gio.bundled("blimp_changepoints.csv"),
            "corpus": gio.bundled("synthetic_corpus.txt"),
            "pairs": gio.bundled("synthetic_pairs.jsonl"),
            "checkpoints": gio.bundled("checkpoints"),
        }
        extra = {k: v for k, v in defaults.items() if getattr(args, k) is None}
    cfg = _config(args, **extra)
    bundle = rp.run_pipeline(cfg)
    print(f"wrote {len(bundle.tables)} tables and {len(bundle.plots)} plots to {cfg.out}")


COMMANDS = {
    "gaps": cmd_gaps, "changepoint": cmd_changepoint, "categorize": cmd_categorize,
    "stats": cmd_stats, "report": cmd_report, "bigram": cmd_bigram,
    "spectral": cmd_spectral, "all": cmd_all,
}


def _fail(code, kind, exc, module=None, subject=None):
    doc = {"status": "error", "kind": kind, "module": module, "subject": subject, "message": str(exc)}
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except InvariantViolation as exc:
        return _fail(EXIT_INTERNAL, "invariant", exc, exc.module, exc.subject)
    except GramTrajError as exc:
        return _fail(EXIT_VALIDATION, "validation", exc, exc.module, exc.subject)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc, "io", getattr(exc, "filename", None))
    except Exception as exc:  # anything else is a bug
        return _fail(EXIT_INTERNAL, "internal", exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
