"""Regressor laws: absolutely continuous, self-similar fractal, low-rank
Gaussian, discrete, and their products and mixtures.

Also home to the small-ball profiler, which estimates
r(h) = E[P(||X' - X||_inf <= h | X)] from a sample, and a box-counting
dimension estimate used to sanity-check fractal samplers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import signal, stats
from scipy.spatial import cKDTree

PROB_TOL = 1e-12
EIG_TOL = 1e-10
# 3**-26 < 1e-12 < 3**-25
CANTOR_DEPTH = 26


class SpecError(ValueError):
    """Invalid distribution, model or experiment specification."""


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def _check_probs(p, name="probs") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise SpecError(f"{name} must be a non-empty vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise SpecError(f"{name} must be finite and nonnegative")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise SpecError(f"{name} must sum to 1 (got {p.sum()!r})")
    return p


@dataclass(frozen=True, eq=False)
class AffineMap:
    """x -> linear @ x + offset, required to be a strict contraction."""

    linear: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.linear, dtype=float))
        b = np.atleast_1d(np.asarray(self.offset, dtype=float))
        if A.shape != (b.size, b.size):
            raise SpecError(f"linear part {A.shape} does not match offset length {b.size}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise SpecError("affine map entries must be finite")
        if np.linalg.norm(A, 2) >= 1.0:
            raise SpecError("affine map is not a contraction (operator norm >= 1)")
        object.__setattr__(self, "linear", A)
        object.__setattr__(self, "offset", b)

    @classmethod
    def similarity(cls, ratio: float, offset) -> "AffineMap":
        offset = np.atleast_1d(np.asarray(offset, dtype=float))
        return cls(ratio * np.eye(offset.size), offset)

    @property
    def dim(self) -> int:
        return self.offset.size

    @property
    def ratio(self) -> float:
        return float(np.linalg.norm(self.linear, 2))

    def fixed_point(self) -> np.ndarray:
        return np.linalg.solve(np.eye(self.dim) - self.linear, self.offset)

    def __call__(self, x):
        return np.asarray(x) @ self.linear.T + self.offset


class DistributionSpec:
    """Base class for regressor laws; subclasses implement ``_draw``."""

    kind: str = ""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def _draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(eq=False)
class UniformBox(DistributionSpec):
    lo: Sequence[float]
    hi: Sequence[float]
    kind = "uniform_box"

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise SpecError("uniform box bounds must be vectors of equal length")
        if np.any(self.hi <= self.lo):
            raise SpecError("uniform box needs hi > lo in every coordinate")

    @property
    def dim(self):
        return self.lo.size

    @property
    def density(self) -> float:
        return 1.0 / float(np.prod(self.hi - self.lo))

    def _draw(self, n, rng):
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(eq=False)
class Gaussian(DistributionSpec):
    """N(mean, cov) with possibly singular cov; draws live on mean + range(cov)."""

    mean: Sequence[float]
    cov: Any
    rank: int | None = None
    kind = "gaussian"

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        q = self.mean.size
        if cov.shape != (q, q):
            raise SpecError(f"cov shape {cov.shape} does not match mean length {q}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise SpecError("cov must be symmetric")
        evals, evecs = np.linalg.eigh(cov)
        if evals.min() < -EIG_TOL:
            raise SpecError("cov must be positive semidefinite")
        evals = np.clip(evals, 0.0, None)
        keep = evals > EIG_TOL
        rank = int(keep.sum())
        if self.rank is not None and int(self.rank) != rank:
            raise SpecError(f"declared rank {self.rank} but cov has rank {rank}")
        self.rank = rank
        self.cov = cov
        self._factor = evecs[:, keep] * np.sqrt(evals[keep])

    @property
    def dim(self):
        return self.mean.size

    def _draw(self, n, rng):
        z = rng.standard_normal((n, self.rank))
        return self.mean + z @ self._factor.T

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean.tolist(),
                "cov": self.cov.tolist(), "rank": self.rank}


@dataclass(eq=False)
class Cantor1D(DistributionSpec):
    """Cantor measure on [shift, shift + scale], drawn digit by digit."""

    scale: float = 1.0
    shift: float = 0.0
    kind = "cantor"

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0 and math.isfinite(self.shift)):
            raise SpecError("cantor scale must be positive and shift finite")

    @property
    def dim(self):
        return 1

    def _draw(self, n, rng):
        bits = rng.integers(0, 2, size=(n, CANTOR_DEPTH))
        weights = 2.0 * 3.0 ** -np.arange(1, CANTOR_DEPTH + 1)
        return (self.shift + self.scale * (bits @ weights))[:, None]

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale, "shift": self.shift}


@dataclass(eq=False)
class IFS(DistributionSpec):
    """Invariant measure of an iterated function system, via the chaos game."""

    maps: Sequence[AffineMap]
    probs: Sequence[float] | None = None
    burn_in: int = 100
    kind = "ifs"

    def __post_init__(self):
        if not self.maps:
            raise SpecError("IFS needs at least one map")
        self.maps = list(self.maps)
        if len({m.dim for m in self.maps}) != 1:
            raise SpecError("IFS maps must share one dimension")
        if self.probs is None:
            self.probs = np.full(len(self.maps), 1.0 / len(self.maps))
        self.probs = _check_probs(self.probs)
        if self.probs.size != len(self.maps):
            raise SpecError("IFS needs one probability per map")
        if int(self.burn_in) < 0:
            raise SpecError("burn_in must be >= 0")
        self.burn_in = int(self.burn_in)

    @property
    def dim(self):
        return self.maps[0].dim

    def similarity_dimension(self) -> float:
        """Root D of sum_i r_i**D = 1."""
        from scipy.optimize import brentq

        ratios = np.array([m.ratio for m in self.maps])
        return brentq(lambda d: np.sum(ratios ** d) - 1.0, 1e-9, 64.0)

    def _draw(self, n, rng):
        return chaos_game(self.maps, self.probs, n + self.burn_in, self.burn_in, rng)

    def to_dict(self):
        return {
            "kind": self.kind,
            "burn_in": self.burn_in,
            "probs": self.probs.tolist(),
            "maps": [{"linear": m.linear.tolist(), "offset": m.offset.tolist()}
                     for m in self.maps],
        }


@dataclass(eq=False)
class DiscretePoints(DistributionSpec):
    atoms: Any
    probs: Sequence[float]
    kind = "discrete"

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] == 0:
            raise SpecError("atoms must be a non-empty list of points")
        self.atoms = atoms
        self.probs = _check_probs(self.probs)
        if self.probs.size != atoms.shape[0]:
            raise SpecError("need one probability per atom")

    @property
    def dim(self):
        return self.atoms.shape[1]

    def _draw(self, n, rng):
        return self.atoms[rng.choice(self.probs.size, size=n, p=self.probs)]

    def to_dict(self):
        return {"kind": self.kind, "atoms": self.atoms.tolist(), "probs": self.probs.tolist()}


@dataclass(eq=False)
class Product(DistributionSpec):
    """Independent blocks of coordinates, concatenated in order."""

    marginals: Sequence[DistributionSpec]
    kind = "product"

    def __post_init__(self):
        if not self.marginals:
            raise SpecError("product needs at least one marginal")
        self.marginals = list(self.marginals)

    @property
    def dim(self):
        return sum(m.dim for m in self.marginals)

    def _draw(self, n, rng):
        children = rng.spawn(len(self.marginals))
        return np.hstack([m._draw(n, r) for m, r in zip(self.marginals, children)])

    def to_dict(self):
        return {"kind": self.kind, "marginals": [m.to_dict() for m in self.marginals]}


@dataclass(eq=False)
class Mixture(DistributionSpec):
    """Finite mixture; each draw picks its component independently."""

    weights: Sequence[float]
    components: Sequence[DistributionSpec]
    kind = "mixture"

    def __post_init__(self):
        self.components = list(self.components)
        self.weights = _check_probs(self.weights, "weights")
        if self.weights.size != len(self.components):
            raise SpecError("need one weight per mixture component")
        if len({c.dim for c in self.components}) != 1:
            raise SpecError("mixture components must share one dimension")

    @property
    def dim(self):
        return self.components[0].dim

    def labels(self, n, rng) -> np.ndarray:
        return rng.choice(self.weights.size, size=n, p=self.weights)

    def _draw(self, n, rng):
        lab_rng, *children = rng.spawn(len(self.components) + 1)
        lab = self.labels(n, lab_rng)
        out = np.empty((n, self.dim))
        for k, (comp, r) in enumerate(zip(self.components, children)):
            idx = np.flatnonzero(lab == k)
            if idx.size:
                out[idx] = comp._draw(idx.size, r)
        return out

    def to_dict(self):
        return {"kind": self.kind, "weights": self.weights.tolist(),
                "components": [c.to_dict() for c in self.components]}


def sample(spec: DistributionSpec, n: int, seed) -> np.ndarray:
    """Draw n points (an (n, q) array), deterministic in (spec, n, seed)."""
    if int(n) < 1:
        raise ValueError("sample size must be >= 1")
    return spec._draw(int(n), _rng(seed))


def chaos_game(maps, probs, m: int, burn_in: int, seed, x0=None) -> np.ndarray:
    """Run the random-iteration Markov chain and drop the first ``burn_in`` states.

    The chain starts at the centroid of the maps' fixed points unless ``x0``
    is given. Returns an ``(m - burn_in, q)`` array.
    """
    if not maps:
        raise ValueError("chaos game needs at least one map")
    if burn_in < 0 or m <= burn_in:
        raise ValueError(f"need m > burn_in >= 0 (got m={m}, burn_in={burn_in})")
    probs = _check_probs(probs)
    rng = _rng(seed)
    q = maps[0].dim
    if x0 is None:
        x0 = np.mean([f.fixed_point() for f in maps], axis=0)
    x0 = np.asarray(x0, dtype=float).reshape(q)
    choice = rng.choice(len(maps), size=m, p=probs)
    offsets = np.array([f.offset for f in maps])[choice]

    lin = maps[0].linear
    ratio = lin[0, 0]
    if all(np.array_equal(f.linear, lin) for f in maps) and np.array_equal(lin, ratio * np.eye(q)):
        # common scalar ratio: x_t = r x_{t-1} + b_t is a first-order linear filter
        path = np.empty((m, q))
        for c in range(q):
            path[:, c], _ = signal.lfilter([1.0], [1.0, -ratio], offsets[:, c], zi=[ratio * x0[c]])
    else:
        linears = np.array([f.linear for f in maps])
        path = np.empty((m, q))
        x = x0
        for t in range(m):
            x = linears[choice[t]] @ x + offsets[t]
            path[t] = x
    return path[burn_in:]


def sierpinski(vertices=((-2.0, 0.0), (2.0, 0.0), (0.0, 2.0)), burn_in: int = 100) -> IFS:
    """Sierpinski triangle IFS: three half-ratio maps toward the vertices."""
    v = np.asarray(vertices, dtype=float)
    return IFS([AffineMap.similarity(0.5, 0.5 * p) for p in v], burn_in=burn_in)


def cantor_ifs(burn_in: int = 100) -> IFS:
    return IFS([AffineMap.similarity(1 / 3, [0.0]), AffineMap.similarity(1 / 3, [2 / 3])],
               burn_in=burn_in)


def uniform_sierpinski_mixture(alpha2: float, burn_in: int = 100) -> Mixture:
    """(1 - alpha2) Uniform[-2,2]^2 + alpha2 Sierpinski, the simulation design."""
    return Mixture([1.0 - alpha2, alpha2],
                   [UniformBox([-2.0, -2.0], [2.0, 2.0]), sierpinski(burn_in=burn_in)])


# ---------------------------------------------------------------- parsing

def from_dict(d: dict) -> DistributionSpec:
    """Build a spec from a nested mapping (the parsed TOML config)."""
    if not isinstance(d, dict) or "kind" not in d:
        raise SpecError("distribution table needs a 'kind' key")
    kind = str(d["kind"]).lower()
    try:
        if kind == "uniform_box":
            return UniformBox(d["lo"], d["hi"])
        if kind == "gaussian":
            return Gaussian(d["mean"], d["cov"], d.get("rank"))
        if kind == "cantor":
            return Cantor1D(float(d.get("scale", 1.0)), float(d.get("shift", 0.0)))
        if kind == "ifs":
            maps = [AffineMap(m["linear"], m["offset"]) for m in d["maps"]]
            return IFS(maps, d.get("probs"), int(d.get("burn_in", 100)))
        if kind == "sierpinski":
            kw = {"vertices": d["vertices"]} if "vertices" in d else {}
            return sierpinski(burn_in=int(d.get("burn_in", 100)), **kw)
        if kind == "discrete":
            return DiscretePoints(d["atoms"], d["probs"])
        if kind == "product":
            return Product([from_dict(m) for m in d["marginals"]])
        if kind == "mixture":
            return Mixture(d["weights"], [from_dict(c) for c in d["components"]])
    except KeyError as e:
        raise SpecError(f"{kind} distribution is missing key {e.args[0]!r}") from None
    raise SpecError(f"unknown distribution kind {kind!r}")


# ---------------------------------------------------------------- small balls

@dataclass
class SmallBallCurve:
    h_values: np.ndarray
    r_hat: np.ndarray
    n: int

    def __post_init__(self):
        self.h_values = np.asarray(self.h_values, dtype=float)
        self.r_hat = np.asarray(self.r_hat, dtype=float)


def _check_h_grid(h_values) -> np.ndarray:
    h = np.atleast_1d(np.asarray(h_values, dtype=float))
    if h.size == 0 or np.any(h <= 0) or not np.all(np.isfinite(h)):
        raise ValueError("h values must be positive and finite")
    if np.any(np.diff(h) <= 0):
        raise ValueError("h values must be strictly increasing")
    return h


def close_pair_counts(X, h_values) -> np.ndarray:
    """Number of ordered pairs i != j with ||X_i - X_j||_inf <= h, per h."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    tree = cKDTree(X)
    counts = tree.count_neighbors(tree, _check_h_grid(h_values), p=np.inf)
    return np.asarray(counts, dtype=np.int64) - X.shape[0]


def small_ball_curve(X, h_values) -> SmallBallCurve:
    """Unbiased U-statistic estimate of r(h) on a grid of cube radii."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < 2:
        raise ValueError("small-ball curve needs at least 2 points")
    h = _check_h_grid(h_values)
    r_hat = close_pair_counts(X, h) / (n * (n - 1.0))
    return SmallBallCurve(h, r_hat, n)


def singularity_exponent(curve: SmallBallCurve) -> tuple[float, float]:
    """OLS slope of log r_hat on log h and its standard error.

    The slope estimates s*q, the exponent with r(h) ~ h**(s q).
    """
    ok = curve.r_hat > 0
    if not np.any(ok):
        raise ValueError("no pairs within largest h")
    if ok.sum() < 3:
        raise ValueError("need at least 3 grid points with r_hat > 0")
    fit = stats.linregress(np.log(curve.h_values[ok]), np.log(curve.r_hat[ok]))
    return float(fit.slope), float(fit.stderr)


def log_h_grid(lo: float, hi: float, points: int) -> np.ndarray:
    return np.geomspace(lo, hi, int(points))


def box_counting_dimension(points, ks=range(2, 8)) -> float:
    """Box-counting dimension from grid sizes 2**-k on the normalized bounding box."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    P = P - P.min(axis=0)
    span = P.max()
    if span <= 0:
        return 0.0
    P = P / span
    ks = np.asarray(list(ks))
    counts = []
    for k in ks:
        cells = np.minimum(np.floor(P * 2.0 ** k), 2 ** k - 1).astype(np.int64)
        counts.append(np.unique(cells, axis=0).shape[0])
    slope = np.polyfit(ks * np.log(2.0), np.log(counts), 1)[0]
    return float(slope)
