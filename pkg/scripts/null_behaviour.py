"""Null distribution of tau-hat: moments, KS distance and size curve.

    python scripts/null_behaviour.py [--reps 2000] [--threads 4]
"""

import argparse
from pathlib import Path

from kspec import harness

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    cfg = harness.load_config(HERE / "configs" / "null_histograms.toml", reps=args.reps)
    summary = harness.run_experiment(cfg, threads=args.threads)
    harness.write_outputs(summary, Path(args.out) / "null_histograms")
    print(f"{'n':>6} {'a':>4} {'mean':>8} {'var':>7} {'skew':>7} {'KS':>7}")
    for c in summary.cells:
        s = harness.summarize_null(c.tau)
        print(f"{c.n:>6} {c.rule:>4g} {s.mean:>8.3f} {s.var:>7.3f} {s.skew:>7.3f} {s.ks:>7.4f}")

    cfg = harness.load_config(HERE / "configs" / "size_curve.toml", reps=args.reps)
    summary = harness.run_experiment(cfg, threads=args.threads)
    harness.write_outputs(summary, Path(args.out) / "size_curve")
    print("\nnominal  " + "  ".join(f"a={c.rule:g}" for c in summary.cells))
    for a in harness.SIZE_GRID:
        print(f"{a:>7.2f}  " + "  ".join(f"{c.rate(a)[0]:.3f}" for c in summary.cells))


if __name__ == "__main__":
    main()
