import math

import numpy as np
import pytest

import naive
from kspec import dist, oracle
from kspec.kernel import Kernel, eval_1d
from kspec.oracle import MomentEstimates, _batch_moments, hall_ratio, ibp_check_1d, kernel_bump
from kspec.regress import DgpSpec, draw_xu
from kspec.rng import child

U01 = dist.UniformBox([0.0], [1.0])


def dgp(F, sigma=1.0):
    return DgpSpec(F, [0.0], error_sigma=sigma)


def test_zero_errors_give_zero_moments():
    est = oracle.mc_moments(dgp(U01, 0.0), 0.1, reps=400, seed=0, batch_size=100)
    assert (est.e_h2, est.e_h4, est.e_g2) == (0.0, 0.0, 0.0)


def test_reps_floor():
    with pytest.raises(ValueError):
        oracle.mc_moments(dgp(U01), 0.1, reps=99)


def test_batch_structure():
    est = oracle.mc_moments(dgp(U01), 0.1, reps=1000, seed=1, batch_size=100)
    assert est.n_used == 1000 and est.reps == 10
    assert all(math.isfinite(v) for v in (est.se_h2, est.se_h4, est.se_g2))
    assert est.e_h2 >= 0 and est.e_h4 >= 0


@pytest.mark.parametrize("m,seed", [(6, 0), (9, 1), (12, 2)])
def test_g2_u_statistic_matches_four_loop(m, seed):
    rng = np.random.default_rng(seed)
    X, u = rng.uniform(size=(m, 1)), rng.normal(size=m)
    e_h2, e_h4, e_g2 = _batch_moments(X, u, 0.6, Kernel.EPANECHNIKOV)
    assert e_g2 == pytest.approx(naive.e_g2(X, u, 0.6), rel=1e-10, abs=1e-15)
    assert e_h2 == pytest.approx(naive.sigma_hat_sq(u, X, 0.6) / 2, rel=1e-12)


def test_g2_matches_quadrature():
    # standard normal errors: E[G^2] = int int (int K((x1-x)/h) K((x2-x)/h) dx)^2 dx1 dx2 on [0,1]
    h, N = 0.1, 1500
    x = (np.arange(N) + 0.5) / N
    M = eval_1d("epanechnikov", (x[:, None] - x[None, :]) / h) / N
    want = float(np.mean((N * (M @ M)) ** 2))
    est = oracle.mc_moments(dgp(U01), h, reps=8000, seed=3, batch_size=1000)
    assert abs(est.e_g2 - want) <= 4 * est.se_g2


def test_ac_limit_uniform_line():
    (h, val, se, target), = oracle.ac_limit_check(U01, 1.0, h_list=[0.05], reps=20000, seed=4)
    assert target == pytest.approx(0.6, abs=1e-15)
    assert abs(val - target) <= 3 * se + h


def test_ac_limit_square_target():
    F = dist.UniformBox([0.0, 0.0], [1.0, 1.0])
    rows = oracle.ac_limit_check(F, 1.0, h_list=[0.1], reps=8000, seed=5)
    assert rows[0][3] == pytest.approx(0.36, abs=1e-15)


def test_ac_limit_homogeneous_in_mu2():
    a = oracle.ac_limit_check(U01, 1.0, h_list=[0.1], reps=400, seed=6, batch_size=100)[0]
    b = oracle.ac_limit_check(U01, 2.0, h_list=[0.1], reps=400, seed=6, batch_size=100)[0]
    assert b[3] == pytest.approx(4 * a[3])
    assert b[1] == pytest.approx(4 * a[1], rel=1e-12)


def test_mean_density_gaussian():
    F = dist.Gaussian([0.0], [[1.0]])
    assert oracle.mean_density(F) == pytest.approx(1 / (2 * math.sqrt(math.pi)))
    with pytest.raises(ValueError):
        oracle.mean_density(dist.cantor_ifs())


def test_mixture_exceeds_uniform():
    uni = dist.UniformBox([-2.0, -2.0], [2.0, 2.0])
    mix = dist.uniform_sierpinski_mixture(0.5)
    a = oracle.mc_moments(dgp(uni), 0.05, reps=20000, seed=7)
    b = oracle.mc_moments(dgp(mix), 0.05, reps=20000, seed=7)
    assert b.e_h2 - a.e_h2 > 3 * math.hypot(a.se_h2, b.se_h2)


def test_monotone_in_h_with_shared_draws():
    mix = dgp(dist.uniform_sierpinski_mixture(0.5))
    vals = [oracle.mc_moments(mix, h, reps=4000, seed=8).e_h2 for h in (0.02, 0.05, 0.1, 0.2)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_small_ball_envelope():
    mix = dist.uniform_sierpinski_mixture(0.5)
    h, eps, reps, bs = 0.1, 0.5, 8000, 2000
    est = oracle.mc_moments(dgp(mix), h, reps=reps, seed=9, batch_size=bs)
    r_h, r_eps = [], []
    for b in range(reps // bs):
        X, _ = draw_xu(dgp(mix), bs, child(9, b))
        r_h.append(dist.small_ball_curve(X, [h]).r_hat[0])
        r_eps.append(dist.small_ball_curve(X, [eps * h]).r_hat[0])
    k0, ke = float(eval_1d("epanechnikov", 0.0)), float(eval_1d("epanechnikov", eps))
    slack = 3 * est.se_h2
    assert est.e_h2 <= k0 ** 4 * np.mean(r_h) + slack
    assert est.e_h2 >= ke ** 4 * np.mean(r_eps) - slack


def test_hall_ratio_examples():
    assert hall_ratio(MomentEstimates(1.0, 0.0, 0.0, 100, 4, 0.0), 10) == 0.0
    est = MomentEstimates(e_h2=1e-1, e_h4=1e-2, e_g2=1e-4, n_used=100, reps=4, se_h2=0.0)
    assert hall_ratio(est, 100) == pytest.approx(0.02, rel=1e-12)
    with pytest.raises(ArithmeticError):
        hall_ratio(MomentEstimates(0.0, 0.0, 0.0, 100, 4, 0.0), 10)


def test_hall_ratio_decreasing_uniform():
    d = dgp(dist.UniformBox([0.0], [1.0]))
    ratios = []
    for n in (500, 2000, 8000):
        ratios.append(hall_ratio(oracle.mc_moments(d, n ** (-1 / 3), reps=8000, seed=10), n))
    assert ratios[0] > ratios[1] > ratios[2]


# ---------------------------------------------------------------- integration by parts

def test_ibp_epanechnikov_uniform():
    lhs, rhs, gap = ibp_check_1d(kernel_bump("epanechnikov"), dist.UniformBox([-1.0], [1.0]))
    assert lhs == pytest.approx(0.5, abs=1e-10)
    assert gap <= 1e-6


def test_ibp_quartic_half_support():
    lhs, rhs, gap = ibp_check_1d(kernel_bump("quartic"), U01)
    assert lhs == pytest.approx(0.5, abs=1e-10)
    assert gap <= 1e-6


def test_ibp_zero_function():
    lhs, rhs, gap = ibp_check_1d(kernel_bump("quartic", height=0.0), U01)
    assert (lhs, rhs, gap) == (0.0, 0.0, 0.0)


def test_ibp_rejects_non_vanishing():
    g = oracle.SmoothBump(lambda x: np.ones_like(np.asarray(x, dtype=float)),
                          lambda x: np.zeros_like(np.asarray(x, dtype=float)), 0.0, 1.0)
    with pytest.raises(ValueError, match="vanish"):
        ibp_check_1d(g, U01)


@pytest.mark.parametrize("kernel,F", [
    ("epanechnikov", dist.UniformBox([-1.0], [1.0])),
    ("quartic", dist.Gaussian([0.3], [[0.5]])),
])
def test_ibp_second_order_convergence(kernel, F):
    gaps = [ibp_check_1d(kernel_bump(kernel), F, g)[2] for g in (64, 128, 256)]
    rates = [math.log2(a / b) for a, b in zip(gaps, gaps[1:])]
    assert min(rates) >= 1.9


def test_ibp_mixture_with_interior_break():
    F = dist.Mixture([0.5, 0.5], [dist.UniformBox([-2.0], [0.2]), dist.Gaussian([0.0], [[1.0]])])
    assert ibp_check_1d(kernel_bump("quartic", 0.1, 0.8), F)[2] <= 1e-6


def test_ibp_unsupported_distribution():
    with pytest.raises(ValueError):
        ibp_check_1d(kernel_bump(), dist.cantor_ifs())
