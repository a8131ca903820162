"""Compactly supported 1-D kernels and their product-form lifting.

Both kernels live on [-1, 1]; callers rescale arguments by the bandwidth.
"""

from __future__ import annotations

import enum

import numpy as np


class Kernel(enum.Enum):
    EPANECHNIKOV = "epanechnikov"
    QUARTIC = "quartic"

    @classmethod
    def parse(cls, name: "str | Kernel") -> "Kernel":
        if isinstance(name, Kernel):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown kernel {name!r}; expected one of "
                f"{[k.value for k in cls]}"
            ) from None

    @property
    def peak(self) -> float:
        """k(0)."""
        return float(eval_1d(self, 0.0))

    @property
    def l2_norm_sq(self) -> float:
        """Closed-form integral of k(t)**2 over [-1, 1]."""
        return _L2_NORM_SQ[self]


_L2_NORM_SQ = {Kernel.EPANECHNIKOV: 3.0 / 5.0, Kernel.QUARTIC: 5.0 / 7.0}


def _check_finite(t):
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("kernel argument must be finite")
    return t


def _as_output(out, scalar_input):
    return float(out) if scalar_input else out


def eval_1d(kernel: Kernel | str, t):
    """Evaluate k(t); exactly zero for |t| >= 1.

    Accepts scalars or arrays and returns the same shape.
    """
    kernel = Kernel.parse(kernel)
    scalar = np.ndim(t) == 0
    t = _check_finite(t)
    s = 1.0 - t * t
    inside = np.abs(t) < 1.0
    if kernel is Kernel.EPANECHNIKOV:
        val = 0.75 * s
    else:
        val = 0.9375 * s * s
    return _as_output(np.where(inside, val, 0.0), scalar)


def deriv_1d(kernel: Kernel | str, t, order: int = 1):
    """Analytic first or second derivative of k on [-1, 1].

    At t = +-1 the continuous extension from the interior is returned.
    Outside [-1, 1] the derivative of the (zero) kernel is 0.
    """
    kernel = Kernel.parse(kernel)
    if order not in (1, 2):
        raise ValueError(f"derivative order must be 1 or 2, got {order!r}")
    scalar = np.ndim(t) == 0
    t = _check_finite(t)
    inside = np.abs(t) <= 1.0
    if kernel is Kernel.EPANECHNIKOV:
        val = -1.5 * t if order == 1 else np.full_like(t, -1.5)
    else:
        if order == 1:
            val = -3.75 * t * (1.0 - t * t)
        else:
            val = -3.75 * (1.0 - 3.0 * t * t)
    return _as_output(np.where(inside, val, 0.0), scalar)


def eval_product(kernel: Kernel | str, x):
    """Product kernel K(x) = prod_i k(x_i).

    ``x`` is a length-q vector or an (m, q) array of m points; the last
    axis is the coordinate axis.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ValueError("product kernel needs at least one coordinate")
    vals = eval_1d(kernel, x)
    out = np.prod(vals, axis=-1)
    return float(out) if out.ndim == 0 else out
