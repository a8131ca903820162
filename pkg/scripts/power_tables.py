"""Power tables for the two alternatives at n = 1500.

    python scripts/power_tables.py [--reps 1000] [--threads 4]
"""

import argparse
from pathlib import Path

from kspec import harness

HERE = Path(__file__).parent


def show(table):
    head = " ".join(f"{a:>5.2f}/a={r:<4g}" for a, r in table.columns)
    print(f"n={table.n:<6} {table.row_name:>7} | {head}")
    for row, rates in zip(table.rows, table.rates):
        print(f"{'':13}{row:>7g} | " + " ".join(f"{v:>11.3f}" for v in rates))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    for name in ("table1", "table2"):
        cfg = harness.load_config(HERE / "configs" / f"{name}.toml", reps=args.reps)
        summary = harness.run_experiment(cfg, threads=args.threads)
        harness.write_outputs(summary, Path(args.out) / name)
        print(f"\n{name} ({cfg.dgp.drift}, {cfg.reps} reps)")
        for t in summary.power_tables():
            show(t)


if __name__ == "__main__":
    main()
