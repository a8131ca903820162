"""``kspec`` command line: sample, test, simulate, smallball, oracle."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import dist, harness, oracle, regress, stat
from .dist import SpecError
from .harness import fmt, load_toml
from .kernel import Kernel

EXIT_OK, EXIT_ERROR, EXIT_INVALID = 0, 1, 2

_RULE = re.compile(r"^\s*n\s*\^\s*\(\s*-\s*1\s*/\s*([0-9]*\.?[0-9]+(?:[eE][-+]?\d+)?)\s*\)\s*$")


def parse_bandwidth(expr: str, n: int) -> float:
    """Literal bandwidth or a rule ``n^(-1/a)``."""
    m = _RULE.match(expr)
    if m:
        return harness.bandwidth(float(m.group(1)), n)
    try:
        h = float(expr)
    except ValueError:
        raise ValueError(f"bad bandwidth expression {expr!r}; use a number or n^(-1/a)") from None
    if not (h > 0 and math.isfinite(h)):
        raise ValueError("bandwidth must be positive")
    return h


def read_dist(path) -> dist.DistributionSpec:
    d = load_toml(path)
    return dist.from_dict(d.get("dist", d))


def read_data(path) -> tuple[np.ndarray, np.ndarray]:
    """CSV with a header; the column named y (any case) is the response,
    otherwise the last column. Headerless numeric files use the last column."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path}: empty data file")
    try:
        [float(v) for v in rows[0]]
        header = None
    except ValueError:
        header, rows = [h.strip().lower() for h in rows[0]], rows[1:]
    data = np.array(rows, dtype=float)
    yc = header.index("y") if header and "y" in header else data.shape[1] - 1
    return np.delete(data, yc, axis=1), data[:, yc]


def read_model(spec: str, q: int) -> regress.ModelSpec:
    if spec == "linear":
        return regress.linear_model(q)
    if Path(spec).exists():
        d = load_toml(spec)
        return regress.model_from_dict(d.get("model", d), q)
    return regress.ModelSpec([b.strip() for b in spec.split(",") if b.strip()])


def _out(path):
    return open(path, "w", newline="") if path and path != "-" else sys.stdout


def _write_rows(path, header, rows):
    fh = _out(path)
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    finally:
        if fh is not sys.stdout:
            fh.close()


# ---------------------------------------------------------------- commands

def cmd_sample(args):
    spec = read_dist(args.dist)
    X = dist.sample(spec, args.n, args.seed)
    _write_rows(args.out, [f"x{j + 1}" for j in range(X.shape[1])], X.tolist())
    return EXIT_OK


def cmd_test(args):
    X, Y = read_data(args.data)
    model = read_model(args.model, X.shape[1])
    h = parse_bandwidth(args.bandwidth, X.shape[0])
    res = stat.run_test(X, Y, model, h, Kernel.parse(args.kernel), args.two_sided)
    row = res.as_row()
    row["alpha"] = args.alpha
    row["reject"] = int(res.p_value < args.alpha)
    _write_rows(args.out, list(row), [list(row.values())])
    return EXIT_OK


def cmd_simulate(args):
    cfg = harness.load_config(args.config, reps=args.reps, seed=args.seed,
                              threads=args.threads, output_dir=args.out)
    summary = harness.run_experiment(cfg)
    for p in harness.write_outputs(summary, args.out):
        logging.info("wrote %s", p)
    return EXIT_INVALID if summary.any_invalid else EXIT_OK


def cmd_smallball(args):
    X = dist.sample(read_dist(args.dist), args.n, args.seed)
    curve = dist.small_ball_curve(X, dist.log_h_grid(args.hmin, args.hmax, args.points))
    slope, se = dist.singularity_exponent(curve)
    _write_rows(args.out, ["h", "r_hat"], zip(curve.h_values, curve.r_hat))
    print(f"# exponent {slope:.6g} (se {se:.3g})", file=sys.stderr)
    return EXIT_OK


def _dgp_for(args):
    return regress.DgpSpec(read_dist(args.dist), [0.0], error_sigma=args.sigma)


def cmd_oracle(args):
    kernel = Kernel.parse(args.kernel)
    if args.what == "moments":
        est = oracle.mc_moments(_dgp_for(args), args.h, kernel, args.reps, args.seed)
        _write_rows(args.out, ["h", "e_h2", "se_h2", "e_h4", "se_h4", "e_g2", "se_g2", "n_used"],
                    [[args.h, est.e_h2, est.se_h2, est.e_h4, est.se_h4, est.e_g2, est.se_g2,
                      est.n_used]])
    elif args.what == "hall":
        dgp = _dgp_for(args)
        rows = []
        for n in args.n_values:
            h = harness.bandwidth(args.rule, n)
            est = oracle.mc_moments(dgp, h, kernel, args.reps, args.seed)
            rows.append([n, h, oracle.hall_ratio(est, n), est.e_h2, est.e_h4, est.e_g2])
        _write_rows(args.out, ["n", "h", "ratio", "e_h2", "e_h4", "e_g2"], rows)
    elif args.what == "ibp":
        bump = oracle.kernel_bump(args.bump, args.center, args.halfwidth)
        lhs, rhs, gap = oracle.ibp_check_1d(bump, read_dist(args.dist), args.grid)
        _write_rows(args.out, ["lhs", "rhs", "gap"], [[lhs, rhs, gap]])
    elif args.what == "aclimit":
        rows = oracle.ac_limit_check(read_dist(args.dist), args.sigma ** 2, kernel,
                                     args.h_list, args.reps, args.seed)
        _write_rows(args.out, ["h", "estimate", "se", "target"], rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kspec", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw from a distribution spec")
    p.add_argument("--dist", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("test", help="run the specification test on a data file")
    p.add_argument("--data", required=True)
    p.add_argument("--model", default="linear",
                   help="'linear', a comma list of basis names, or a TOML model file")
    p.add_argument("--bandwidth", default="n^(-1/3)")
    p.add_argument("--kernel", default="epanechnikov")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--two-sided", action="store_true")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="run a Monte Carlo experiment from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("smallball", help="profile r(h) and its log-log slope")
    p.add_argument("--dist", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--hmin", type=float, required=True)
    p.add_argument("--hmax", type=float, required=True)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_smallball)

    p = sub.add_parser("oracle", help="moment, Hall-ratio, IBP and AC-limit checks")
    p.add_argument("what", choices=["moments", "hall", "ibp", "aclimit"])
    p.add_argument("--dist", required=True)
    p.add_argument("--kernel", default="epanechnikov")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--h", type=float, default=0.05)
    p.add_argument("--h-list", type=float, nargs="+", default=[0.1, 0.03, 0.01])
    p.add_argument("--n-values", type=int, nargs="+", default=[500, 2000, 8000])
    p.add_argument("--rule", type=float, default=3.0)
    p.add_argument("--reps", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bump", default="epanechnikov")
    p.add_argument("--center", type=float, default=0.0)
    p.add_argument("--halfwidth", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=4096)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SpecError, ValueError, OSError, regress.FitError, ArithmeticError) as e:
        print(f"kspec: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
