"""Power along local alternatives gamma_n = c n^-1/2 r(h_n)^-1/4.

    python scripts/local_power.py [--reps 1000]
"""

import argparse
from pathlib import Path

from kspec import harness

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="results/local_power")
    args = ap.parse_args()
    cfg = harness.load_config(HERE / "configs" / "local_power.toml", reps=args.reps)
    summary = harness.run_experiment(cfg, threads=args.threads)
    harness.write_outputs(summary, args.out)
    print(f"{'n':>6} {'c':>5} {'gamma':>8} {'power':>7} {'se':>6}")
    for c in summary.cells:
        rate, se = c.rate(0.05)
        print(f"{c.n:>6} {c.row:>5g} {c.gamma:>8.4f} {rate:>7.3f} {se:>6.3f}")


if __name__ == "__main__":
    main()
