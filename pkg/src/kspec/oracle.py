"""Monte Carlo and quadrature checks of the moment structure behind the test.

With H(Z1, Z2) = u1 u2 K((X1 - X2)/h) and
G(Z1, Z2) = E[H(Z1, Z3) H(Z2, Z3) | Z1, Z2], the normal limit of the
U-statistic needs (E G^2 + E H^4 / n) / (E H^2)^2 -> 0.

Moments are estimated by U-statistics over independent batches of draws:
E[G^2] = E[H13 H23 H14 H24] over four distinct draws, which is unbiased.
Batch means give the standard errors. Calls sharing a seed reuse the same
draws, so comparisons across h or n are paired.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.special import ndtr

from .dist import Gaussian, Mixture, UniformBox
from .kernel import Kernel, deriv_1d, eval_1d
from .regress import DgpSpec, draw_xu
from .rng import child
from .stat import kernel_pairs

MIN_REPS = 100
MIN_BATCHES = 4


@dataclass
class MomentEstimates:
    e_h2: float
    e_h4: float
    e_g2: float
    n_used: int
    reps: int
    se_h2: float
    se_h4: float = float("nan")
    se_g2: float = float("nan")


def _batch_moments(X, u, h, kernel):
    m = X.shape[0]
    i, j, k = kernel_pairs(X, h, kernel)
    w = u[i] * u[j] * k
    w2 = w * w
    pairs = m * (m - 1.0)
    e_h2 = 2.0 * w2.sum() / pairs
    e_h4 = 2.0 * (w2 * w2).sum() / pairs
    if w.size == 0 or m < 4:
        return e_h2, e_h4, 0.0
    W = sp.coo_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(m, m)).tocsr()
    W2 = W.multiply(W).tocsr()
    A = W @ W
    B = W2 @ W2
    # sum over i != j of (W^2)_ij^2 minus the k == l terms
    s = (A.data ** 2).sum() - (A.diagonal() ** 2).sum() - (B.data.sum() - B.diagonal().sum())
    e_g2 = s / (m * (m - 1.0) * (m - 2.0) * (m - 3.0))
    return e_h2, e_h4, e_g2


def mc_moments(dgp: DgpSpec, h: float, kernel=Kernel.EPANECHNIKOV, reps: int = 10000,
               seed: int = 0, batch_size: int = 2000) -> MomentEstimates:
    """Estimate E[H^2], E[H^4], E[G^2] from ``reps`` draws of (X, u).

    Draws are split into at least four independent batches; each batch
    contributes U-statistic estimates over all its pairs (or 4-tuples).
    """
    if reps < MIN_REPS:
        raise ValueError(f"need reps >= {MIN_REPS}, got {reps}")
    if not (h > 0):
        raise ValueError("bandwidth must be positive")
    kernel = Kernel.parse(kernel)
    n_batches = max(MIN_BATCHES, math.ceil(reps / batch_size))
    sizes = [len(s) for s in np.array_split(np.arange(reps), n_batches)]
    est = np.empty((n_batches, 3))
    for b, m in enumerate(sizes):
        X, u = draw_xu(dgp, m, child(seed, b))
        est[b] = _batch_moments(X, u, h, kernel)
    mean = est.mean(axis=0)
    se = est.std(axis=0, ddof=1) / math.sqrt(n_batches)
    return MomentEstimates(float(mean[0]), float(mean[1]), float(mean[2]), int(reps),
                           n_batches, float(se[0]), float(se[1]), float(se[2]))


def hall_ratio(estimates: MomentEstimates, n: int) -> float:
    """(E G^2 + E H^4 / n) / (E H^2)^2."""
    if not (estimates.e_h2 > 0):
        raise ArithmeticError("E[H^2] estimate is zero; ratio undefined")
    return (estimates.e_g2 + estimates.e_h4 / n) / estimates.e_h2 ** 2


# ---------------------------------------------------------------- integration by parts

@dataclass
class SmoothBump:
    """Compactly supported g on [lo, hi] with derivative ``deriv``."""

    func: Callable
    deriv: Callable
    lo: float
    hi: float


def kernel_bump(kernel="epanechnikov", center: float = 0.0, halfwidth: float = 1.0,
                height: float = 1.0) -> SmoothBump:
    kernel = Kernel.parse(kernel)
    return SmoothBump(
        func=lambda x: height * eval_1d(kernel, (np.asarray(x) - center) / halfwidth),
        deriv=lambda x: height / halfwidth * deriv_1d(kernel, np.clip(
            (np.asarray(x) - center) / halfwidth, -1.0, 1.0)),
        lo=center - halfwidth,
        hi=center + halfwidth,
    )


def _cdf_and_pdf(F):
    """(cdf, pdf, breakpoints) for 1-D uniform, Gaussian, or mixtures of them."""
    if F.dim != 1:
        raise ValueError("integration-by-parts check is one-dimensional")
    if isinstance(F, UniformBox):
        a, b = float(F.lo[0]), float(F.hi[0])
        return (lambda t: np.clip((np.asarray(t) - a) / (b - a), 0.0, 1.0),
                lambda t: np.where((np.asarray(t) >= a) & (np.asarray(t) <= b), 1.0 / (b - a), 0.0),
                [a, b])
    if isinstance(F, Gaussian):
        if F.rank == 0:
            raise ValueError("degenerate Gaussian has no density")
        mu, s = float(F.mean[0]), math.sqrt(float(F.cov[0, 0]))
        return (lambda t: ndtr((np.asarray(t) - mu) / s),
                lambda t: np.exp(-0.5 * ((np.asarray(t) - mu) / s) ** 2) / (s * math.sqrt(2 * math.pi)),
                [])
    if isinstance(F, Mixture):
        parts = [_cdf_and_pdf(c) for c in F.components]
        wts = F.weights
        return (lambda t: sum(w * p[0](t) for w, p in zip(wts, parts)),
                lambda t: sum(w * p[1](t) for w, p in zip(wts, parts)),
                sorted({x for p in parts for x in p[2]}))
    raise ValueError(f"no closed-form CDF for {type(F).__name__}")


def ibp_check_1d(g: SmoothBump, F, grid: int = 4096) -> tuple[float, float, float]:
    """Compare int g dF with -int_l^u F(l, t) g'(t) dt.

    The left side uses adaptive quadrature against the density; the right
    side is a composite trapezoid rule on ``grid`` intervals.
    """
    lo, hi = float(g.lo), float(g.hi)
    scale = max(1.0, float(np.max(np.abs(g.func(np.linspace(lo, hi, 65))))))
    if abs(float(g.func(lo))) > 1e-12 * scale or abs(float(g.func(hi))) > 1e-12 * scale:
        raise ValueError("g must vanish at the endpoints of its support interval")
    if grid < 2:
        raise ValueError("grid must be >= 2")
    cdf, pdf, breaks = _cdf_and_pdf(F)
    pts = [b for b in breaks if lo < b < hi] or None
    lhs, _ = integrate.quad(lambda x: float(g.func(x)) * float(pdf(x)), lo, hi,
                            points=pts, epsabs=1e-14, epsrel=1e-13, limit=500)
    t = np.linspace(lo, hi, grid + 1)
    mass = cdf(t) - cdf(lo)
    rhs = -integrate.trapezoid(mass * g.deriv(t), t)
    return float(lhs), float(rhs), float(abs(lhs - rhs))


# ---------------------------------------------------------------- AC limit

def mean_density(F) -> float:
    """E[f_X(X)] = int f^2 for the densities with a closed form."""
    if isinstance(F, UniformBox):
        return F.density
    if isinstance(F, Gaussian) and F.rank == F.dim:
        return float((4 * math.pi) ** (-F.dim / 2) / math.sqrt(np.linalg.det(F.cov)))
    raise ValueError(f"E[f_X] not available for {type(F).__name__}")


def ac_limit_check(density_spec, mu2_const: float, kernel=Kernel.EPANECHNIKOV,
                   h_list=(0.1, 0.03, 0.01), reps: int = 20000, seed: int = 0,
                   batch_size: int = 2000) -> list[tuple[float, float, float, float]]:
    """Rows (h, h^-q E[H^2], standard error, limit) for homoscedastic errors.

    The limit is mu2^2 E[f_X] (int k^2)^q. All h share the same draws.
    """
    kernel = Kernel.parse(kernel)
    q = density_spec.dim
    target = mu2_const ** 2 * mean_density(density_spec) * kernel.l2_norm_sq ** q
    dgp = DgpSpec(density_spec, [0.0], error_sigma=math.sqrt(mu2_const))
    rows = []
    for h in h_list:
        est = mc_moments(dgp, h, kernel, reps, seed, batch_size)
        rows.append((float(h), est.e_h2 / h ** q, est.se_h2 / h ** q, target))
    return rows
