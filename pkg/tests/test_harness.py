import json
import math

import numpy as np
import pytest

from kspec import dist, harness, regress
from kspec.dist import SpecError
from kspec.harness import ExperimentConfig, PowerTable, run_experiment, summarize_null

MODEL = regress.linear_model(2)


def small_cfg(**kw):
    dgp = kw.pop("dgp", regress.DgpSpec(dist.uniform_sierpinski_mixture(0.5), [1, 1, 1],
                                         "sine_prod", 0.4))
    base = dict(dgp=dgp, model=MODEL, n_values=[60], bandwidth_rules=[3.0], reps=12,
                alpha_levels=[0.05], seed=3, alpha2_values=[0.2, 0.8])
    base.update(kw)
    return ExperimentConfig(**base)


def test_bandwidth_examples():
    assert harness.bandwidth(4, 10000) == pytest.approx(0.1, rel=1e-15)
    assert harness.bandwidth(1, 37) == pytest.approx(1 / 37, rel=1e-15)
    assert harness.bandwidth(3, 1500) == pytest.approx(0.08736, abs=1e-5)
    with pytest.raises(ValueError):
        harness.bandwidth(0, 10)
    with pytest.raises(ValueError):
        harness.bandwidth(3, 0)


def test_config_validation():
    with pytest.raises(SpecError):
        small_cfg(reps=0)
    with pytest.raises(SpecError):
        small_cfg(alpha_levels=[1.0])
    with pytest.raises(SpecError):
        small_cfg(n_values=[9])
    with pytest.raises(SpecError):
        small_cfg(experiment_kind="bogus")
    with pytest.raises(SpecError):
        small_cfg(experiment_kind="local_power", alpha2_values=None,
                  dgp=regress.DgpSpec(dist.uniform_sierpinski_mixture(0.5), [1, 1, 1]))


def test_single_rep_rates_are_binary():
    s = run_experiment(small_cfg(reps=1))
    for c in s.cells:
        assert c.rate(0.05)[0] in (0.0, 1.0)


def test_power_table_shape_and_se():
    s = run_experiment(small_cfg(alpha_levels=[0.01, 0.05], bandwidth_rules=[4.0, 3.0]))
    (t,) = s.power_tables()
    assert t.rows == [0.2, 0.8] and t.rates.shape == (2, 4)
    assert np.all((t.rates >= 0) & (t.rates <= 1))
    assert np.allclose(t.se, np.sqrt(t.rates * (1 - t.rates) / 12))
    r, _ = t.cell(0.8, 0.05, 3.0)
    assert r == s.find(row=0.8, rule=3.0).rate(0.05)[0]


def test_cells_reproducible_in_isolation():
    a = run_experiment(small_cfg())
    b = run_experiment(small_cfg(alpha2_values=[0.8]))
    assert np.array_equal(a.find(row=0.8).tau, b.find(row=0.8).tau)


def test_thread_count_does_not_change_results():
    a = run_experiment(small_cfg(), threads=1)
    b = run_experiment(small_cfg(), threads=2)
    for x, y in zip(a.cells, b.cells):
        assert np.array_equal(x.tau, y.tau) and np.array_equal(x.p, y.p)


def test_degenerate_cells_flagged():
    dgp = regress.DgpSpec(dist.uniform_sierpinski_mixture(0.5), [1, 1, 1], error_sigma=0.0)
    s = run_experiment(small_cfg(dgp=dgp, alpha2_values=None, experiment_kind="size_curve", reps=5))
    c = s.cells[0]
    assert c.n_degenerate == 5 and c.reps_valid == 0 and c.invalid and s.any_invalid
    assert math.isnan(c.rate(0.05)[0])


def test_local_power_gamma_follows_rate():
    cfg = small_cfg(experiment_kind="local_power", alpha2_values=None, c_values=[0.0, 2.0],
                    pilot_n=2000, reps=2)
    s = run_experiment(cfg)
    g0, g2 = s.find(row=0.0).gamma, s.find(row=2.0).gamma
    assert g0 == 0.0
    h = harness.bandwidth(3.0, 60)
    r = harness.pilot_small_ball(cfg.dgp.x_dist, h, 2000,
                                 harness.child(cfg.seed, harness.cell_hash("pilot|n=60|a=3.0")))
    assert g2 == pytest.approx(regress.local_alternative_rate(60, r, 2.0))


def test_summarize_null_gaussian_sample():
    t = np.random.default_rng(0).standard_normal(5000)
    s = summarize_null(t)
    assert s.ks <= 0.03
    assert abs(s.mean) < 0.05 and abs(s.var - 1) < 0.06
    assert s.rates[0.05] == pytest.approx(np.mean(t > 1.6448536269514722))


def test_summarize_null_constant():
    s = summarize_null(np.full(200, 0.0))
    assert s.var == 0.0 and s.skew == 0.0
    assert s.ks == pytest.approx(0.5)
    with pytest.raises(ValueError):
        summarize_null(np.zeros(50))


def test_fd_histogram_counts_in_range():
    t = np.random.default_rng(1).standard_normal(1000)
    edges, counts = harness.fd_histogram(t)
    assert edges[0] == -4.0 and edges[-1] == 4.0
    assert counts.sum() == np.sum((t >= -4) & (t <= 4))


def test_empty_power_table_is_header_only(tmp_path):
    t = PowerTable(100, "alpha2", [], [(0.05, 3.0)], np.zeros((0, 1)), np.zeros((0, 1)))
    p = tmp_path / "t.csv"
    harness.write_power_table(t, p)
    assert p.read_text().strip().count("\n") == 0


def test_power_table_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    rates = rng.uniform(size=(3, 4))
    t = PowerTable(1500, "alpha2", [0.2, 0.5, 0.8], [(0.01, 4.0), (0.01, 3.0), (0.05, 4.0), (0.05, 2.5)],
                   rates, np.sqrt(rates * (1 - rates) / 997))
    p = tmp_path / "t.csv"
    harness.write_power_table(t, p)
    back = harness.read_power_table(p, 1500)
    assert back.rows == t.rows and back.columns == t.columns
    assert np.array_equal(back.rates, t.rates) and np.array_equal(back.se, t.se)


def test_manifest_rerun_is_identical(tmp_path):
    cfg = small_cfg(experiment_kind="power_table")
    harness.write_outputs(run_experiment(cfg), tmp_path / "a")
    cfg2 = harness.load_config(tmp_path / "a" / "manifest.json")
    harness.write_outputs(run_experiment(cfg2), tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name


def test_null_outputs(tmp_path):
    dgp = regress.DgpSpec(dist.uniform_sierpinski_mixture(0.5), [1, 1, 1])
    cfg = small_cfg(dgp=dgp, alpha2_values=None, experiment_kind="size_curve", reps=100)
    files = {p.name for p in harness.write_outputs(run_experiment(cfg), tmp_path)}
    assert {"manifest.json", "cells.csv", "tau_samples.csv", "null_summary.csv",
            "size_curve.csv", "hist_n60_a3.csv"} <= files
    lines = (tmp_path / "size_curve.csv").read_text().splitlines()
    assert len(lines) == 1 + len(harness.SIZE_GRID)


def test_smallball_profile(tmp_path):
    dgp = regress.DgpSpec(dist.UniformBox([-2, -2], [2, 2]), [0, 0, 0])
    cfg = small_cfg(dgp=dgp, alpha2_values=None, experiment_kind="smallball_profile",
                    n_values=[3000], hmin=0.04, hmax=0.8, points=10)
    s = run_experiment(cfg)
    assert s.exponent[0] == pytest.approx(2.0, abs=0.1)
    names = {p.name for p in harness.write_outputs(s, tmp_path)}
    assert names == {"manifest.json", "smallball.csv", "exponent.csv"}


def test_config_from_toml(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("""
experiment_kind = "power_table"
n_values = [100]
bandwidth_rules = [4, 3]
reps = 7
alpha2_values = [0.5]

[dgp]
beta0 = [1, 1, 1]
drift = "cosine_prod"
gamma = 0.4
[dgp.x_dist]
kind = "mixture"
weights = [0.5, 0.5]
components = [{kind = "uniform_box", lo = [-2, -2], hi = [2, 2]}, {kind = "sierpinski"}]
""")
    cfg = harness.load_config(p, reps=3, seed=11)
    assert cfg.reps == 3 and cfg.seed == 11 and cfg.n_values == [100]
    assert list(cfg.model.basis) == ["const", "x1", "x2"]
    assert cfg.dgp.drift == "cosine_prod"
    p.write_text('foo = 1\n[dgp]\nbeta0 = [1]\n[dgp.x_dist]\nkind = "uniform_box"\nlo = [0]\nhi = [1]\n')
    with pytest.raises(SpecError, match="unknown config keys"):
        harness.load_config(p)
