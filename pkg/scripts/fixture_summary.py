"""Pattern summary and statistics battery from the bundled per-class change points.

    python scripts/fixture_summary.py [--fixture PATH] [--pooled]

Prints the pattern table (counts and mean change-point steps) followed by the
ANOVA, pairwise t and Kruskal-Wallis results for both change-point columns.
"""

import argparse
from pathlib import Path

from gramtraj import io as gio
from gramtraj import report as rp


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fixture", type=Path, default=gio.bundled("blimp_changepoints.csv"))
    ap.add_argument("--pooled", action="store_true", help="pooled-variance t tests")
    args = ap.parse_args(argv)

    cats, cps = rp.fixture_maps(gio.read_fixture_changepoints(args.fixture))
    print(rp.format_summary(rp.summarize_patterns(cats, cps)))
    print()
    for r in rp.stats_table(cats, cps, pooled=args.pooled).records():
        df = ", ".join(f"{d:g}" if float(d).is_integer() else f"{d:.2f}"
                       for d in (r["df1"], r["df2"]) if d is not None)
        print(f"{r['measure']:<14} {r['test']:<15} {r['comparison']:<12} "
              f"{r['statistic']:>8.3f}  df=({df})  p={r['p_value']:.4g}")


if __name__ == "__main__":
    main()
