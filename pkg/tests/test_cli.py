import csv

import numpy as np
import pytest

from kspec import cli, dist, regress

MIX = """
[dist]
kind = "mixture"
weights = [0.5, 0.5]
components = [{kind = "uniform_box", lo = [-2, -2], hi = [2, 2]}, {kind = "sierpinski"}]
"""


@pytest.fixture
def mix_file(tmp_path):
    p = tmp_path / "mix.toml"
    p.write_text(MIX)
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_parse_bandwidth():
    assert cli.parse_bandwidth("n^(-1/4)", 10000) == pytest.approx(0.1)
    assert cli.parse_bandwidth(" n ^ ( - 1 / 2.5 ) ", 1500) == pytest.approx(1500 ** -0.4)
    assert cli.parse_bandwidth("0.25", 10) == 0.25
    for bad in ("abc", "-1", "n^(1/3)"):
        with pytest.raises(ValueError):
            cli.parse_bandwidth(bad, 10)


def test_sample(tmp_path, mix_file):
    out = tmp_path / "x.csv"
    assert cli.main(["sample", "--dist", str(mix_file), "--n", "50", "--seed", "4", "--out", str(out)]) == 0
    r = rows(out)
    assert r[0] == ["x1", "x2"] and len(r) == 51
    X = np.array(r[1:], dtype=float)
    assert np.array_equal(X, dist.sample(cli.read_dist(mix_file), 50, 4))


def _data_file(tmp_path, sigma=1.0, n=300):
    dgp = regress.DgpSpec(dist.uniform_sierpinski_mixture(0.5), [1, 1, 1], error_sigma=sigma)
    X, Y = regress.gen_dgp(dgp, regress.linear_model(2), n, 5)
    p = tmp_path / "d.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "x1", "x2"])
        w.writerows(np.column_stack([Y, X]).tolist())
    return p, X, Y


def test_test_command(tmp_path):
    p, X, Y = _data_file(tmp_path)
    out = tmp_path / "r.csv"
    assert cli.main(["test", "--data", str(p), "--bandwidth", "n^(-1/3)", "--out", str(out)]) == 0
    header, vals = rows(out)
    rec = dict(zip(header, vals))
    from kspec.stat import run_test
    want = run_test(X, Y, regress.linear_model(2), 300 ** (-1 / 3))
    assert float(rec["tau_hat"]) == want.tau_hat
    assert int(rec["reject"]) == int(want.p_value < 0.05)


def test_test_command_basis_list_and_model_file(tmp_path):
    p, _, _ = _data_file(tmp_path)
    assert cli.main(["test", "--data", str(p), "--model", "const,x1", "--out", str(tmp_path / "a")]) == 0
    m = tmp_path / "m.toml"
    m.write_text('[model]\nbasis = ["const", "x1", "x2"]\n')
    assert cli.main(["test", "--data", str(p), "--model", str(m), "--out", str(tmp_path / "b")]) == 0


def test_test_command_errors(tmp_path, capsys):
    p, _, _ = _data_file(tmp_path, sigma=0.0)
    assert cli.main(["test", "--data", str(p), "--out", str(tmp_path / "r")]) == 1
    assert "degenerate" in capsys.readouterr().err
    assert cli.main(["test", "--data", str(tmp_path / "missing.csv")]) == 1


def test_read_data_without_y_header(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,2,3\n4,5,6\n")
    X, Y = cli.read_data(p)
    assert Y.tolist() == [3, 6] and X.shape == (2, 2)


SIM = """
experiment_kind = "power_table"
n_values = [60]
bandwidth_rules = [3]
reps = 5
alpha2_values = [0.5]
alpha_levels = [0.05]

[dgp]
beta0 = [1, 1, 1]
drift = "sine_prod"
gamma = 0.4
error_sigma = {sigma}
[dgp.x_dist]
kind = "mixture"
weights = [0.5, 0.5]
components = [{{kind = "uniform_box", lo = [-2, -2], hi = [2, 2]}}, {{kind = "sierpinski"}}]
"""


def test_simulate(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(SIM.format(sigma=1.0))
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", str(cfg), "--reps", "4", "--seed", "2", "--out", str(out)]) == 0
    assert (out / "power_n60.csv").exists() and (out / "manifest.json").exists()
    cells = rows(out / "cells.csv")
    assert cells[1][cells[0].index("reps_valid")] == "4"


def test_simulate_invalid_cells_exit_2(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(SIM.format(sigma=0.0).replace('gamma = 0.4', 'gamma = 0.0'))
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_smallball(tmp_path, capsys):
    p = tmp_path / "u.toml"
    p.write_text('[dist]\nkind = "uniform_box"\nlo = [-2, -2]\nhi = [2, 2]\n')
    out = tmp_path / "s.csv"
    assert cli.main(["smallball", "--dist", str(p), "--n", "3000", "--hmin", "0.04",
                     "--hmax", "0.8", "--points", "8", "--out", str(out)]) == 0
    assert len(rows(out)) == 9
    slope = float(capsys.readouterr().err.split()[2])
    assert abs(slope - 2) < 0.1
    assert cli.main(["smallball", "--dist", str(p), "--n", "10", "--hmin", "1",
                     "--hmax", "0.1", "--out", str(out)]) == 1


def test_oracle_subcommands(tmp_path):
    p = tmp_path / "u.toml"
    p.write_text('[dist]\nkind = "uniform_box"\nlo = [0]\nhi = [1]\n')
    base = ["--dist", str(p), "--reps", "800"]
    assert cli.main(["oracle", "moments", *base, "--h", "0.1", "--out", str(tmp_path / "m.csv")]) == 0
    assert cli.main(["oracle", "hall", *base, "--n-values", "100", "400",
                     "--out", str(tmp_path / "h.csv")]) == 0
    assert len(rows(tmp_path / "h.csv")) == 3
    assert cli.main(["oracle", "aclimit", *base, "--h-list", "0.1", "0.05",
                     "--out", str(tmp_path / "a.csv")]) == 0
    assert float(rows(tmp_path / "a.csv")[1][3]) == pytest.approx(0.6)
    assert cli.main(["oracle", "ibp", "--dist", str(p), "--bump", "quartic", "--center", "0.5",
                     "--halfwidth", "0.4", "--out", str(tmp_path / "i.csv")]) == 0
    assert float(rows(tmp_path / "i.csv")[1][2]) <= 1e-6
    assert cli.main(["oracle", "moments", "--dist", str(p), "--reps", "10"]) == 1


def test_bad_subcommand_exits():
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])
