"""Data-generating processes, parametric model fitting and residuals."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import dist as _dist
from .dist import DistributionSpec, SpecError
from .rng import generator

COND_WARN = 1e8
MAX_HALVINGS = 20


class FitError(RuntimeError):
    """Model could not be fitted (rank deficiency, singular Gauss-Newton step)."""


class ConvergenceError(FitError):
    pass


# ---------------------------------------------------------------- registries

BASIS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "const": lambda X: np.ones(X.shape[0]),
}

DRIFTS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sine_prod": lambda X: np.sin(2 * np.pi * X[:, 0]) * np.sin(2 * np.pi * X[:, 1]),
    "cosine_prod": lambda X: np.cos(2 * np.pi * X[:, 0]) * np.cos(2 * np.pi * X[:, 1]),
    # support kept away from [0, 1] in the first coordinate
    "indicator_band": lambda X: ((X[:, 0] <= -0.25) | (X[:, 0] >= 1.25)).astype(float),
}

# heteroscedastic scale functions s(x): u = sigma * s(X) * Z
ERROR_SCALES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "unit": lambda X: np.ones(X.shape[0]),
    "linear_abs": lambda X: 1.0 + 0.5 * np.abs(X[:, 0]),
}


def register_basis(name: str, fn: Callable[[np.ndarray], np.ndarray]) -> None:
    BASIS[name] = fn


def register_drift(name: str, fn: Callable[[np.ndarray], np.ndarray]) -> None:
    DRIFTS[name] = fn


_COORD = re.compile(r"^x(\d+)$")


def basis_function(name: str) -> Callable[[np.ndarray], np.ndarray]:
    """Look up a basis column by name; ``x1``, ``x2``, ... are coordinates."""
    if name in BASIS:
        return BASIS[name]
    m = _COORD.match(name)
    if m and int(m.group(1)) >= 1:
        j = int(m.group(1)) - 1
        return lambda X: X[:, j]
    raise SpecError(f"unknown basis function {name!r}")


def drift_function(name: str) -> Callable[[np.ndarray], np.ndarray]:
    try:
        return DRIFTS[name]
    except KeyError:
        raise SpecError(f"undefined drift function {name!r}; known: {sorted(DRIFTS)}") from None


# ---------------------------------------------------------------- models

@dataclass
class ModelSpec:
    """Parametric regression family g(x, beta).

    Linear-in-parameter models are given by a list of basis names. A
    nonlinear model supplies ``func(X, beta)`` and ``grad(X, beta)``
    (returning the n x p Jacobian) together with ``p``.
    """

    basis: Sequence[str] = ()
    func: Callable | None = None
    grad: Callable | None = None
    p: int | None = None
    name: str = ""

    def __post_init__(self):
        self.basis = tuple(self.basis)
        if self.func is None:
            if not self.basis:
                raise SpecError("model needs at least one basis function")
            self._cols = [basis_function(b) for b in self.basis]
            self.p = len(self.basis)
        else:
            if self.grad is None or self.p is None or self.p < 1:
                raise SpecError("nonlinear model needs func, grad and p >= 1")

    def __getstate__(self):
        # basis columns are closures; rebuild them from names after unpickling
        state = self.__dict__.copy()
        state.pop("_cols", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        if self.func is None:
            self._cols = [basis_function(b) for b in self.basis]

    @property
    def parameter_dim(self) -> int:
        return int(self.p)

    @property
    def is_linear(self) -> bool:
        return self.func is None

    def design(self, X) -> np.ndarray:
        if not self.is_linear:
            raise SpecError("design matrix is only defined for linear models")
        X = np.asarray(X, dtype=float)
        return np.column_stack([np.broadcast_to(c(X), X.shape[:1]) for c in self._cols])

    def value(self, X, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.p,):
            raise ValueError(f"beta has shape {beta.shape}, model expects ({self.p},)")
        if self.is_linear:
            return self.design(X) @ beta
        return np.asarray(self.func(np.asarray(X, dtype=float), beta), dtype=float)

    def jacobian(self, X, beta) -> np.ndarray:
        if self.is_linear:
            return self.design(X)
        return np.asarray(self.grad(np.asarray(X, dtype=float), np.asarray(beta, dtype=float)))

    def to_dict(self) -> dict:
        if self.is_linear:
            return {"basis": list(self.basis)}
        return {"nonlinear": self.name}


def _exp_index(X, beta):
    return np.exp(X @ beta)


def _exp_index_grad(X, beta):
    return np.exp(X @ beta)[:, None] * X


NONLINEAR_MODELS: dict[str, Callable[[int], ModelSpec]] = {
    # g(x, beta) = exp(x . beta)
    "exp_index": lambda q: ModelSpec(func=_exp_index, grad=_exp_index_grad, p=q, name="exp_index"),
}


def linear_model(q: int) -> ModelSpec:
    """Intercept plus every coordinate: g(x, b) = b0 + b1 x1 + ... + bq xq."""
    return ModelSpec(("const",) + tuple(f"x{j}" for j in range(1, q + 1)))


def model_from_dict(d: dict, q: int | None = None) -> ModelSpec:
    if "nonlinear" in d:
        name = d["nonlinear"]
        if name not in NONLINEAR_MODELS:
            raise SpecError(f"unknown nonlinear model {name!r}")
        if q is None:
            raise SpecError("nonlinear model needs the regressor dimension")
        return NONLINEAR_MODELS[name](q)
    if "basis" not in d:
        raise SpecError("model table needs 'basis' or 'nonlinear'")
    return ModelSpec(d["basis"])


# ---------------------------------------------------------------- DGPs

@dataclass
class DgpSpec:
    """Y = g(X, beta0) + gamma * drift(X) + sigma * s(X) * Z, Z ~ N(0, 1)."""

    x_dist: DistributionSpec
    beta0: Sequence[float]
    drift: str | None = None
    gamma: float = 0.0
    error_sigma: float = 1.0
    error_scale: str | None = None

    def __post_init__(self):
        self.beta0 = np.atleast_1d(np.asarray(self.beta0, dtype=float))
        if self.gamma < 0 or not np.isfinite(self.gamma):
            raise SpecError("gamma must be finite and >= 0")
        if self.drift is None and self.gamma != 0:
            raise SpecError("gamma > 0 requires a drift function")
        if self.error_sigma < 0:
            raise SpecError("error_sigma must be >= 0")
        if self.drift is not None:
            drift_function(self.drift)
        if self.error_scale is not None and self.error_scale not in ERROR_SCALES:
            raise SpecError(f"unknown error scale {self.error_scale!r}")

    def errors(self, X, rng) -> np.ndarray:
        z = rng.standard_normal(X.shape[0])
        scale = self.error_sigma
        if self.error_scale is not None:
            scale = scale * ERROR_SCALES[self.error_scale](X)
        return scale * z

    def to_dict(self) -> dict:
        return {"x_dist": self.x_dist.to_dict(), "beta0": self.beta0.tolist(),
                "drift": self.drift, "gamma": self.gamma,
                "error_sigma": self.error_sigma, "error_scale": self.error_scale}


def dgp_from_dict(d: dict) -> DgpSpec:
    try:
        return DgpSpec(
            x_dist=_dist.from_dict(d["x_dist"]),
            beta0=d["beta0"],
            drift=d.get("drift"),
            gamma=float(d.get("gamma", 0.0)),
            error_sigma=float(d.get("error_sigma", 1.0)),
            error_scale=d.get("error_scale"),
        )
    except KeyError as e:
        raise SpecError(f"dgp table is missing key {e.args[0]!r}") from None


def draw_xu(dgp: DgpSpec, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Regressors and errors on separate child streams of ``seed``."""
    if int(n) < 1:
        raise ValueError("n must be >= 1")
    X = _dist.sample(dgp.x_dist, n, generator(seed, 0))
    u = dgp.errors(X, generator(seed, 1))
    return X, u


def gen_dgp(dgp: DgpSpec, model: ModelSpec, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw (X, Y) from the DGP; the drift never perturbs the X or u streams."""
    if dgp.beta0.size != model.parameter_dim:
        raise SpecError(f"beta0 has {dgp.beta0.size} entries, model has {model.parameter_dim}")
    X, u = draw_xu(dgp, n, seed)
    Y = model.value(X, dgp.beta0) + u
    if dgp.drift is not None:
        Y = Y + dgp.gamma * drift_function(dgp.drift)(X)
    return X, Y


# ---------------------------------------------------------------- fitting

@dataclass
class OlsResult:
    beta: np.ndarray
    cond_warning: bool
    cond: float = field(default=np.nan)


def fit_ols(X_design, Y, names: Sequence[str] | None = None) -> OlsResult:
    """Least squares via column-pivoted QR.

    Raises FitError naming the dependent columns when the design is
    numerically rank deficient.
    """
    A = np.asarray(X_design, dtype=float)
    y = np.asarray(Y, dtype=float)
    if A.ndim != 2 or y.shape != (A.shape[0],):
        raise ValueError(f"design {A.shape} and response {y.shape} are incompatible")
    n, p = A.shape
    if n < p:
        raise ValueError(f"need n >= p (n={n}, p={p})")
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    tol = max(n, p) * np.finfo(float).eps * (d[0] if d.size else 0.0)
    rank = int(np.sum(d > tol))
    if rank < p:
        bad = sorted(piv[rank:].tolist())
        labels = [names[j] for j in bad] if names is not None else bad
        raise FitError(f"rank-deficient design: columns {labels} are linearly dependent")
    z = scipy.linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(p)
    beta[piv] = z
    sv = np.linalg.svd(A, compute_uv=False)
    cond = float(sv[0] / sv[-1])
    return OlsResult(beta, cond > COND_WARN, cond)


@dataclass
class NlsResult:
    beta: np.ndarray
    converged: bool
    n_iter: int
    ssr: float


def fit_nls(model: ModelSpec, X, Y, beta_init, max_iter: int = 100, tol: float = 1e-12) -> NlsResult:
    """Gauss-Newton with step halving.

    Stops when the relative SSR improvement falls below ``tol`` or the
    step is negligible. Exhausting ``max_iter`` returns ``converged=False``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    beta = np.asarray(beta_init, dtype=float).copy()
    if not np.all(np.isfinite(beta)):
        raise ValueError("beta_init must be finite")

    def ssr_at(b):
        r = Y - model.value(X, b)
        return float(r @ r), r

    ssr, r = ssr_at(beta)
    for it in range(1, max_iter + 1):
        J = model.jacobian(X, beta)
        s = np.linalg.svd(J, compute_uv=False)
        if s[-1] <= s[0] * J.shape[0] * np.finfo(float).eps:
            raise FitError("singular Jacobian Gram matrix in Gauss-Newton step")
        step = np.linalg.lstsq(J, r, rcond=None)[0]
        if np.linalg.norm(step) <= tol * (1.0 + np.linalg.norm(beta)):
            return NlsResult(beta, True, it - 1, ssr)
        lam = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + lam * step
            new_ssr, new_r = ssr_at(cand)
            if np.isfinite(new_ssr) and new_ssr <= ssr:
                break
            lam *= 0.5
        else:
            return NlsResult(beta, False, it, ssr)
        improvement = (ssr - new_ssr) / max(ssr, np.finfo(float).tiny)
        beta, ssr, r = cand, new_ssr, new_r
        if improvement < tol:
            return NlsResult(beta, True, it, ssr)
    return NlsResult(beta, False, max_iter, ssr)


def fit(model: ModelSpec, X, Y, beta_init=None) -> np.ndarray:
    """OLS for linear designs, Gauss-Newton otherwise."""
    if model.is_linear:
        res = fit_ols(model.design(X), Y, model.basis)
        if res.cond_warning:
            warnings.warn(f"ill-conditioned design (cond={res.cond:.3g})", RuntimeWarning)
        return res.beta
    if beta_init is None:
        beta_init = np.zeros(model.parameter_dim)
    res = fit_nls(model, X, Y, beta_init)
    if not res.converged:
        raise ConvergenceError(f"Gauss-Newton did not converge after {res.n_iter} iterations")
    return res.beta


def residuals(model: ModelSpec, beta_hat, X, Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.shape[0] != Y.shape[0] or Y.ndim != 1:
        raise ValueError(f"X has {X.shape[0]} rows but Y has shape {Y.shape}")
    return Y - model.value(X, beta_hat)


def local_alternative_rate(n: int, r_hat_hn: float, c: float, *, slow: bool = False,
                           h_n: float | None = None, s_delta_q: float | None = None) -> float:
    """Drift scale gamma_n of a local alternative.

    Fast rate: c n^{-1/2} r^{-1/4}. With ``slow=True``:
    c n^{-1/2} r^{1/4} h_n^{-s_delta_q / 2}, the rate for drifts supported
    away from the most singular mixture component.
    """
    if not (r_hat_hn > 0):
        raise ValueError("small-ball probability must be > 0")
    if c < 0:
        raise ValueError("c must be >= 0")
    if not slow:
        return c * n ** -0.5 * r_hat_hn ** -0.25
    if h_n is None or s_delta_q is None or h_n <= 0:
        raise ValueError("slow rate needs h_n > 0 and s_delta_q")
    return c * n ** -0.5 * r_hat_hn ** 0.25 * h_n ** (-s_delta_q / 2.0)
