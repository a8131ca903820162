"""Kernel-weighted specification test statistics.

All pairwise sums run over the pairs within kernel reach only (a KD-tree
query in the sup norm) and are accumulated with ``math.fsum``, so the
result is the correctly rounded sum regardless of pair order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import norm

from .kernel import Kernel, eval_product
from .regress import ModelSpec, fit, residuals

# pad the tree query so rounding in the sup-norm test never drops a pair;
# pairs at distance >= h get kernel weight exactly 0
_REACH_PAD = 1e-9
# residuals below this (relative to max|Y|) come from an exact fit
RESID_FLOOR = 1e-12


class DegenerateStatisticError(ArithmeticError):
    """The variance estimate is zero, so the studentized statistic is undefined."""


@dataclass
class TestResult:
    __test__ = False  # not a pytest class

    i_hat: float
    sigma_hat_sq: float
    tau_hat: float
    p_value: float
    n: int
    bandwidth: float
    kernel: str

    def as_row(self) -> dict:
        return asdict(self)


def _validate(X, h, n_min=2):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < n_min:
        raise ValueError(f"need at least {n_min} observations, got {X.shape[0]}")
    if not (h > 0) or not math.isfinite(h):
        raise ValueError(f"bandwidth must be positive and finite, got {h!r}")
    return X


def kernel_pairs(X, h: float, kernel: Kernel | str = Kernel.EPANECHNIKOV):
    """Unordered pairs i < j with K((X_i - X_j)/h) > 0 and their weights."""
    X = _validate(X, h)
    pairs = cKDTree(X).query_pairs(h * (1.0 + _REACH_PAD), p=np.inf, output_type="ndarray")
    if pairs.size == 0:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty, np.empty(0)
    i, j = pairs[:, 0], pairs[:, 1]
    w = eval_product(kernel, (X[i] - X[j]) / h)
    keep = w > 0
    return i[keep], j[keep], w[keep]


def _pair_sums(u, X, h, kernel):
    u = np.asarray(u, dtype=float)
    X = _validate(X, h)
    if u.shape != (X.shape[0],):
        raise ValueError(f"residual vector {u.shape} does not match {X.shape[0]} observations")
    i, j, w = kernel_pairs(X, h, kernel)
    n = X.shape[0]
    norm_ = n * (n - 1.0)
    prod = u[i] * u[j]
    s1 = math.fsum(prod * w)
    s2 = math.fsum(prod * prod * (w * w))
    # sums over i < j; the ordered double sum is twice that
    return 2.0 * s1 / norm_, 4.0 * s2 / norm_


def u_stat(u, X, h: float, kernel: Kernel | str = Kernel.EPANECHNIKOV) -> float:
    """Degenerate U-statistic sum_{i != j} u_i u_j K((X_i - X_j)/h) / (n(n-1))."""
    return _pair_sums(u, X, h, kernel)[0]


def i_hat(u_hat, X, h: float, kernel: Kernel | str = Kernel.EPANECHNIKOV) -> float:
    """Feasible statistic: ``u_stat`` evaluated at the fitted residuals."""
    return u_stat(u_hat, X, h, kernel)


def sigma_hat_sq(u_hat, X, h: float, kernel: Kernel | str = Kernel.EPANECHNIKOV) -> float:
    """2/(n(n-1)) sum_{i != j} u_i^2 u_j^2 K^2((X_i - X_j)/h).

    Returns 0.0 when no pair interacts or all residuals vanish; ``tau_hat``
    refuses to studentize by it.
    """
    return _pair_sums(u_hat, X, h, kernel)[1]


def tau_hat(i_hat_val: float, sigma_hat_sq_val: float, n: int,
            two_sided: bool = False) -> tuple[float, float]:
    """Studentized statistic n I / sqrt(sigma^2) and its normal p-value (upper tail by default)."""
    if not (sigma_hat_sq_val > 0):
        raise DegenerateStatisticError("variance estimate is zero; statistic is degenerate")
    tau = n * i_hat_val / math.sqrt(sigma_hat_sq_val)
    p = 2.0 * norm.sf(abs(tau)) if two_sided else norm.sf(tau)
    return float(tau), float(p)


def statistic(u_hat, X, h, kernel=Kernel.EPANECHNIKOV, two_sided=False) -> TestResult:
    """Î, σ̂² and τ̂ from given residuals, sharing one pair search."""
    kernel = Kernel.parse(kernel)
    X = _validate(X, h)
    i_val, s_val = _pair_sums(u_hat, X, h, kernel)
    tau, p = tau_hat(i_val, s_val, X.shape[0], two_sided)
    return TestResult(i_val, s_val, tau, p, X.shape[0], float(h), kernel.value)


def run_test(X, Y, model: ModelSpec, h: float, kernel=Kernel.EPANECHNIKOV,
             two_sided: bool = False) -> TestResult:
    """Fit the null model, then test its residuals for neglected structure."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < model.parameter_dim + 2:
        raise ValueError(f"need n >= p + 2 observations (n={n}, p={model.parameter_dim})")
    beta = fit(model, X, Y)
    u_hat = residuals(model, beta, X, Y)
    # an exact fit leaves rounding noise only; treat it as zero residuals
    scale = max(1.0, float(np.max(np.abs(Y))))
    if np.max(np.abs(u_hat)) <= RESID_FLOOR * scale:
        u_hat = np.zeros_like(u_hat)
    return statistic(u_hat, X, h, kernel, two_sided)
