"""Kernel-weighted specification tests for regressors with singular laws."""

from .dist import (
    IFS, AffineMap, Cantor1D, DiscretePoints, DistributionSpec, Gaussian, Mixture, Product,
    SmallBallCurve, SpecError, UniformBox, chaos_game, sample, singularity_exponent,
    small_ball_curve,
)
from .kernel import Kernel, deriv_1d, eval_1d, eval_product
from .regress import DgpSpec, ModelSpec, fit_nls, fit_ols, gen_dgp, residuals
from .stat import DegenerateStatisticError, TestResult, i_hat, run_test, sigma_hat_sq, tau_hat, u_stat

__all__ = [
    "AffineMap", "Cantor1D", "DegenerateStatisticError", "DgpSpec", "DiscretePoints",
    "DistributionSpec", "Gaussian", "IFS", "Kernel", "Mixture", "ModelSpec", "Product",
    "SmallBallCurve", "SpecError", "TestResult", "UniformBox", "chaos_game", "deriv_1d",
    "eval_1d", "eval_product", "fit_nls", "fit_ols", "gen_dgp", "i_hat", "residuals",
    "run_test", "sample", "sigma_hat_sq", "singularity_exponent", "small_ball_curve",
    "tau_hat", "u_stat",
]
