"""Seeded replication engine for size, power and null-distribution experiments.

Each experiment is a grid of cells (row value x n x bandwidth rule). A
replication's seed depends only on the root seed, the cell label and the
replication index, so results are identical for any worker count.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from . import dist as _dist
from .dist import Mixture, SpecError
from .kernel import Kernel
from .regress import DgpSpec, ModelSpec, dgp_from_dict, gen_dgp, local_alternative_rate, model_from_dict
from .rng import child, cell_hash, replication_seed
from .stat import DegenerateStatisticError, run_test

log = logging.getLogger(__name__)

KINDS = ("null_histogram", "size_curve", "power_table", "local_power", "smallball_profile")
DEGENERATE_LIMIT = 0.001
HIST_RANGE = (-4.0, 4.0)
SIZE_GRID = tuple(round(0.01 * k, 2) for k in range(1, 11))


def bandwidth(rule_exponent: float, n: int) -> float:
    """h = n^(-1/a)."""
    if not (rule_exponent > 0):
        raise ValueError("bandwidth exponent must be > 0")
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(n ** (-1.0 / rule_exponent))


@dataclass
class ExperimentConfig:
    dgp: DgpSpec
    model: ModelSpec
    n_values: list[int] = field(default_factory=lambda: [1500])
    bandwidth_rules: list[float] = field(default_factory=lambda: [4.0, 3.0, 2.5])
    kernel: str = "epanechnikov"
    reps: int = 5000
    alpha_levels: list[float] = field(default_factory=lambda: [0.01, 0.05])
    seed: int = 0
    experiment_kind: str = "power_table"
    output_dir: str = "results"
    # power_table rows: weight on the second component of a two-part mixture
    alpha2_values: list[float] | None = None
    # local_power rows: multipliers c in gamma_n = c n^-1/2 r(h_n)^-1/4
    c_values: list[float] | None = None
    pilot_n: int = 20000
    two_sided: bool = False
    threads: int = 1
    # smallball_profile settings
    hmin: float = 10 ** -2.5
    hmax: float = 10 ** -0.5
    points: int = 20

    def __post_init__(self):
        if self.experiment_kind not in KINDS:
            raise SpecError(f"experiment_kind must be one of {KINDS}")
        if self.reps < 1:
            raise SpecError("reps must be >= 1")
        if any(not (0 < a < 1) for a in self.alpha_levels):
            raise SpecError("alpha levels must lie in (0, 1)")
        if any(n < 10 for n in self.n_values):
            raise SpecError("every n must be >= 10")
        if any(a <= 0 for a in self.bandwidth_rules):
            raise SpecError("bandwidth exponents must be > 0")
        Kernel.parse(self.kernel)
        if self.experiment_kind == "local_power" and self.dgp.drift is None:
            raise SpecError("local_power needs a drift function in the dgp")
        if self.alpha2_values is not None and not (
                isinstance(self.dgp.x_dist, Mixture) and len(self.dgp.x_dist.components) == 2):
            raise SpecError("alpha2_values needs a two-component mixture x_dist")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "n_values", "bandwidth_rules", "kernel", "reps", "alpha_levels", "seed",
            "experiment_kind", "output_dir", "alpha2_values", "c_values", "pilot_n",
            "two_sided", "threads", "hmin", "hmax", "points")}
        d["dgp"] = self.dgp.to_dict()
        d["model"] = self.model.to_dict()
        return d


_SCALAR_KEYS = {"kernel", "reps", "seed", "experiment_kind", "output_dir", "pilot_n",
                "two_sided", "threads", "hmin", "hmax", "points"}
_LIST_KEYS = {"n_values", "bandwidth_rules", "alpha_levels", "alpha2_values", "c_values"}


def config_from_dict(d: dict, **overrides) -> ExperimentConfig:
    d = {**d, **{k: v for k, v in overrides.items() if v is not None}}
    unknown = set(d) - _SCALAR_KEYS - _LIST_KEYS - {"dgp", "model"}
    if unknown:
        raise SpecError(f"unknown config keys {sorted(unknown)}")
    if "dgp" not in d:
        raise SpecError("config needs a [dgp] table")
    dgp = dgp_from_dict(d["dgp"])
    model = model_from_dict(d.get("model", {"basis": ["const"] + [
        f"x{j}" for j in range(1, dgp.x_dist.dim + 1)]}), dgp.x_dist.dim)
    kw = {k: d[k] for k in _SCALAR_KEYS | _LIST_KEYS if k in d and d[k] is not None}
    for k in ("n_values", "reps", "seed", "pilot_n", "threads", "points"):
        if k in kw:
            kw[k] = [int(v) for v in kw[k]] if isinstance(kw[k], list) else int(kw[k])
    return ExperimentConfig(dgp=dgp, model=model, **kw)


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a TOML config (or a JSON manifest written by ``write_outputs``)."""
    path = Path(path)
    if path.suffix == ".json":
        d = json.loads(path.read_text())
        d = d.get("config", d)
    else:
        d = load_toml(path)
    return config_from_dict(d, **overrides)


def load_toml(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


# ---------------------------------------------------------------- replication

def _replicate(task) -> tuple[float, float]:
    dgp, model, n, h, kernel, seed, two_sided = task
    X, Y = gen_dgp(dgp, model, n, seed)
    try:
        res = run_test(X, Y, model, h, kernel, two_sided)
    except DegenerateStatisticError:
        return math.nan, math.nan
    return res.tau_hat, res.p_value


@dataclass
class CellResult:
    label: str
    row: float | None
    n: int
    rule: float
    h: float
    gamma: float
    tau: np.ndarray
    p: np.ndarray

    @property
    def n_degenerate(self) -> int:
        return int(np.isnan(self.tau).sum())

    @property
    def reps_valid(self) -> int:
        return int(self.tau.size - self.n_degenerate)

    @property
    def invalid(self) -> bool:
        return self.n_degenerate > DEGENERATE_LIMIT * self.tau.size

    def rate(self, alpha: float) -> tuple[float, float]:
        """Rejection rate at level ``alpha`` and its binomial standard error."""
        ok = ~np.isnan(self.p)
        if not ok.any():
            return math.nan, math.nan
        r = float(np.mean(self.p[ok] < alpha))
        return r, math.sqrt(r * (1.0 - r) / ok.sum())


@dataclass
class PowerTable:
    n: int
    row_name: str
    rows: list[float]
    columns: list[tuple[float, float]]  # (alpha, bandwidth exponent)
    rates: np.ndarray
    se: np.ndarray

    def cell(self, row: float, alpha: float, rule: float) -> tuple[float, float]:
        i = self.rows.index(row)
        j = self.columns.index((alpha, rule))
        return float(self.rates[i, j]), float(self.se[i, j])


@dataclass
class NullSummary:
    mean: float
    var: float
    skew: float
    ks: float
    rates: dict[float, float]


@dataclass
class ExperimentSummary:
    config: ExperimentConfig
    cells: list[CellResult] = field(default_factory=list)
    curve: _dist.SmallBallCurve | None = None
    exponent: tuple[float, float] | None = None

    @property
    def any_invalid(self) -> bool:
        return any(c.invalid for c in self.cells)

    def find(self, row=None, n=None, rule=None) -> CellResult:
        for c in self.cells:
            if (row is None or c.row == row) and (n is None or c.n == n) and \
                    (rule is None or c.rule == rule):
                return c
        raise KeyError((row, n, rule))

    def power_tables(self) -> list[PowerTable]:
        cfg = self.config
        row_name = {"power_table": "alpha2", "local_power": "c"}.get(cfg.experiment_kind, "row")
        tables = []
        for n in cfg.n_values:
            cells = [c for c in self.cells if c.n == n]
            rows = sorted({c.row for c in cells if c.row is not None})
            cols = [(a, r) for a in cfg.alpha_levels for r in cfg.bandwidth_rules]
            rates = np.full((len(rows), len(cols)), np.nan)
            se = np.full_like(rates, np.nan)
            for c in cells:
                if c.row is None:
                    continue
                i = rows.index(c.row)
                for j, (a, r) in enumerate(cols):
                    if r == c.rule:
                        rates[i, j], se[i, j] = c.rate(a)
            tables.append(PowerTable(n, row_name, rows, cols, rates, se))
        return tables


def _with_alpha2(x_dist: Mixture, alpha2: float) -> Mixture:
    return Mixture([1.0 - alpha2, alpha2], x_dist.components)


def pilot_small_ball(x_dist, h: float, n_pilot: int, seed) -> float:
    """r(h) from a large independent pilot sample."""
    X = _dist.sample(x_dist, n_pilot, np.random.default_rng(seed))
    return float(_dist.small_ball_curve(X, [h]).r_hat[0])


def _cells(cfg: ExperimentConfig):
    """(label, row, n, rule, dgp) for every cell of the experiment grid."""
    kind = cfg.experiment_kind
    out = []
    for n in cfg.n_values:
        for a in cfg.bandwidth_rules:
            h = bandwidth(a, n)
            if kind == "power_table" and cfg.alpha2_values is not None:
                for a2 in cfg.alpha2_values:
                    dgp = replace(cfg.dgp, x_dist=_with_alpha2(cfg.dgp.x_dist, a2))
                    out.append((f"{kind}|alpha2={a2!r}|n={n}|a={a!r}", a2, n, a, h, dgp))
            elif kind == "local_power":
                r = pilot_small_ball(cfg.dgp.x_dist, h, cfg.pilot_n,
                                     child(cfg.seed, cell_hash(f"pilot|n={n}|a={a!r}")))
                for c in cfg.c_values or [0.0, 1.0, 2.0]:
                    gamma = local_alternative_rate(n, r, c)
                    dgp = replace(cfg.dgp, gamma=gamma)
                    out.append((f"{kind}|c={c!r}|n={n}|a={a!r}", c, n, a, h, dgp))
            else:
                out.append((f"{kind}|n={n}|a={a!r}", None, n, a, h, cfg.dgp))
    return out


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> ExperimentSummary:
    """Run every (cell, replication) of the grid and collect statistics."""
    summary = ExperimentSummary(cfg)
    if cfg.experiment_kind == "smallball_profile":
        X = _dist.sample(cfg.dgp.x_dist, cfg.n_values[0], np.random.default_rng(child(cfg.seed, 0)))
        summary.curve = _dist.small_ball_curve(X, _dist.log_h_grid(cfg.hmin, cfg.hmax, cfg.points))
        summary.exponent = _dist.singularity_exponent(summary.curve)
        return summary

    threads = threads or cfg.threads or 1
    kernel = Kernel.parse(cfg.kernel)
    cells = _cells(cfg)
    tasks = [(dgp, cfg.model, n, h, kernel, replication_seed(cfg.seed, label, r), cfg.two_sided)
             for label, _, n, _, h, dgp in cells for r in range(cfg.reps)]
    log.info("running %d cells x %d reps with %d worker(s)", len(cells), cfg.reps, threads)
    if threads > 1:
        with ProcessPoolExecutor(threads) as pool:
            results = list(pool.map(_replicate, tasks, chunksize=max(1, cfg.reps // (4 * threads))))
    else:
        results = [_replicate(t) for t in tasks]
    res = np.array(results, dtype=float).reshape(len(cells), cfg.reps, 2)
    for (label, row, n, a, h, dgp), block in zip(cells, res):
        summary.cells.append(CellResult(label, row, n, a, h, dgp.gamma, block[:, 0], block[:, 1]))
        if summary.cells[-1].invalid:
            log.warning("cell %s: %d degenerate replications", label, summary.cells[-1].n_degenerate)
    return summary


def summarize_null(tau_samples, alpha_levels: Sequence[float] = (0.01, 0.05, 0.10)) -> NullSummary:
    """Moments, KS distance to N(0, 1) and one-sided rejection rates."""
    t = np.asarray(tau_samples, dtype=float)
    t = t[~np.isnan(t)]
    if t.size < 100:
        raise ValueError("need at least 100 samples")
    var = float(np.var(t, ddof=1))
    skew = float(stats.skew(t)) if var > 0 else 0.0
    ks = float(stats.kstest(t, "norm").statistic)
    rates = {a: float(np.mean(t > stats.norm.isf(a))) for a in alpha_levels}
    return NullSummary(float(np.mean(t)), var, skew, ks, rates)


def fd_histogram(tau_samples, value_range=HIST_RANGE) -> tuple[np.ndarray, np.ndarray]:
    """Freedman-Diaconis bins laid on a fixed range; returns (edges, counts)."""
    t = np.asarray(tau_samples, dtype=float)
    t = t[~np.isnan(t)]
    lo, hi = value_range
    iqr = float(np.subtract(*np.percentile(t, [75, 25]))) if t.size else 0.0
    width = 2.0 * iqr * t.size ** (-1.0 / 3.0) if iqr > 0 else (hi - lo) / 10
    nbins = max(1, int(math.ceil((hi - lo) / width)))
    counts, edges = np.histogram(t, bins=nbins, range=value_range)
    return edges, counts


# ---------------------------------------------------------------- output

def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])


def power_table_rows(table: PowerTable):
    header = [table.row_name] + [f"rate|alpha={a!r}|a={r!r}" for a, r in table.columns] + \
        [f"se|alpha={a!r}|a={r!r}" for a, r in table.columns]
    rows = [[row] + list(table.rates[i]) + list(table.se[i]) for i, row in enumerate(table.rows)]
    return header, rows


def write_power_table(table: PowerTable, path) -> None:
    header, rows = power_table_rows(table)
    _write_csv(Path(path), header, rows)


def read_power_table(path, n: int) -> PowerTable:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = [[float(v) for v in line] for line in r]
    k = (len(header) - 1) // 2
    cols = []
    for name in header[1:1 + k]:
        parts = dict(p.split("=") for p in name.split("|")[1:])
        cols.append((float(parts["alpha"]), float(parts["a"])))
    arr = np.array(data, dtype=float).reshape(len(data), 1 + 2 * k)
    return PowerTable(n, header[0], arr[:, 0].tolist(), cols, arr[:, 1:1 + k], arr[:, 1 + k:])


def write_outputs(summary: ExperimentSummary, out_dir=None) -> list[Path]:
    """CSV tables, histogram bins and a manifest echoing the resolved config."""
    cfg = summary.config
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    manifest = {"config": cfg.to_dict(), "root_seed": cfg.seed,
                "package": "kspec", "version": _version()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    written.append(out / "manifest.json")

    if summary.curve is not None:
        p = out / "smallball.csv"
        _write_csv(p, ["h", "r_hat"], zip(summary.curve.h_values, summary.curve.r_hat))
        p2 = out / "exponent.csv"
        _write_csv(p2, ["slope", "stderr", "n"], [[*summary.exponent, summary.curve.n]])
        return written + [p, p2]

    p = out / "cells.csv"
    rows = []
    for c in summary.cells:
        for a in cfg.alpha_levels:
            rate, se = c.rate(a)
            rows.append([c.label, c.row, c.n, c.rule, c.h, c.gamma, a, rate, se,
                         c.reps_valid, c.n_degenerate, int(c.invalid)])
    _write_csv(p, ["cell", "row", "n", "rule", "h", "gamma", "alpha", "rate", "se",
                   "reps_valid", "n_degenerate", "invalid"], rows)
    written.append(p)

    p = out / "tau_samples.csv"
    _write_csv(p, ["cell", "rep", "tau"],
               ([c.label, r, t] for c in summary.cells for r, t in enumerate(c.tau)))
    written.append(p)

    if cfg.experiment_kind in ("power_table", "local_power"):
        for table in summary.power_tables():
            p = out / f"power_n{table.n}.csv"
            write_power_table(table, p)
            written.append(p)

    if cfg.experiment_kind in ("null_histogram", "size_curve"):
        p = out / "null_summary.csv"
        rows = []
        for c in summary.cells:
            if c.reps_valid >= 100:
                s = summarize_null(c.tau, cfg.alpha_levels)
                rows.append([c.n, c.rule, c.h, s.mean, s.var, s.skew, s.ks])
        _write_csv(p, ["n", "rule", "h", "mean", "var", "skew", "ks"], rows)
        written.append(p)
        for c in summary.cells:
            edges, counts = fd_histogram(c.tau)
            p = out / f"hist_n{c.n}_a{c.rule:g}.csv"
            _write_csv(p, ["bin_lo", "bin_hi", "count"], zip(edges[:-1], edges[1:], counts))
            written.append(p)

    if cfg.experiment_kind == "size_curve":
        p = out / "size_curve.csv"
        rows = [[c.n, c.rule, a, *c.rate(a)] for c in summary.cells for a in SIZE_GRID]
        _write_csv(p, ["n", "rule", "nominal", "empirical", "se"], rows)
        written.append(p)
    return written


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "unknown"
