"""Squared-exponential kernel and its rectangle-averaged integral form.

Each map cell carries the *average* of the latent field over its area, so
the covariance between two cells is the double integral of the point kernel
over both rectangles divided by their areas.  The 2D SE kernel factorizes
per axis, which turns that 4D integral into a product of two 1D double
integrals with closed forms in the error function.  A Gauss-Legendre
quadrature evaluator is provided as an independent numerical check.

The closed form is evaluated by a compiled core when available, with a
NumPy fallback selected at import time (force it with ARGP_PURE_PYTHON=1).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import Rect

if os.environ.get("ARGP_PURE_PYTHON"):
    from . import _kernelcore_py as _core

    COMPILED_CORE = False
else:
    try:
        from . import _kernelcore as _core  # type: ignore[attr-defined]

        COMPILED_CORE = True
    except ImportError:
        from . import _kernelcore_py as _core

        COMPILED_CORE = False


def backend_name() -> str:
    return "compiled" if COMPILED_CORE else "python"


@dataclass(frozen=True)
class Hyperparams:
    """SE kernel hyperparameters: signal variance (field units squared) and length scale (m)."""

    signal_variance: float
    length_scale: float

    def __post_init__(self):
        if not (self.signal_variance > 0 and self.length_scale > 0):
            raise ValueError(
                f"hyperparameters must be positive, got {self.signal_variance}, {self.length_scale}"
            )


def se_kernel(p, q, hyper: Hyperparams) -> float:
    """Point covariance sigma^2 * exp(-|p-q|^2 / (2 l^2)); symmetric, in (0, sigma^2]."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    d2 = float(np.sum((p - q) ** 2))
    ell = hyper.length_scale
    return hyper.signal_variance * math.exp(-d2 / (2.0 * ell * ell))


def integral_mean(rect: Rect, prior_mean, n_points: int = 32) -> float:
    """Average of the prior mean function over a rectangle.

    ``prior_mean`` is either a constant (the usual case, returned as-is) or a
    callable f(x, y) averaged by tensor-product Gauss-Legendre quadrature.
    """
    if rect.area <= 0:
        raise ValueError("zero-area rectangle")
    if callable(prior_mean):
        x, wx = _gl_nodes(rect.x_min, rect.x_max, n_points)
        y, wy = _gl_nodes(rect.y_min, rect.y_max, n_points)
        vals = prior_mean(x[:, None], y[None, :])
        return float(wx @ vals @ wy / rect.area)
    return float(prior_mean)


def integral_kernel(ri: Rect, rj: Rect, hyper: Hyperparams) -> float:
    """Averaged covariance between two rectangles (closed form, exactly symmetric)."""
    return _core.cov_pair(
        ri.x_min, ri.x_max, ri.y_min, ri.y_max,
        rj.x_min, rj.x_max, rj.y_min, rj.y_max,
        hyper.signal_variance, hyper.length_scale,
    )


def integral_cov_matrix(x_lo, x_hi, y_lo, y_hi, hyper: Hyperparams, core=None) -> np.ndarray:
    """Dense symmetric covariance matrix over n cells given their bound arrays.

    Deduplicates the per-axis intervals first: cells on a grid share few
    distinct intervals, so the factor tables stay tiny and the remaining cost
    is the n x n fill.  ``core`` overrides the active backend (benchmarks).
    """
    x_lo = np.ascontiguousarray(x_lo, dtype=np.float64)
    x_hi = np.ascontiguousarray(x_hi, dtype=np.float64)
    y_lo = np.ascontiguousarray(y_lo, dtype=np.float64)
    y_hi = np.ascontiguousarray(y_hi, dtype=np.float64)
    n = x_lo.shape[0]
    if not (x_hi.shape[0] == y_lo.shape[0] == y_hi.shape[0] == n) or n == 0:
        raise ValueError("bound arrays must be non-empty and of equal length")
    if np.any(x_hi <= x_lo) or np.any(y_hi <= y_lo):
        raise ValueError("degenerate rectangle in cell bounds")

    ux, ix = np.unique(np.column_stack((x_lo, x_hi)), axis=0, return_inverse=True)
    uy, iy = np.unique(np.column_stack((y_lo, y_hi)), axis=0, return_inverse=True)
    ix = np.ascontiguousarray(ix.reshape(-1), dtype=np.intp)
    iy = np.ascontiguousarray(iy.reshape(-1), dtype=np.intp)

    backend = core if core is not None else _core
    return backend.cov_matrix(
        np.ascontiguousarray(ux[:, 0]), np.ascontiguousarray(ux[:, 1]), ix,
        np.ascontiguousarray(uy[:, 0]), np.ascontiguousarray(uy[:, 1]), iy,
        hyper.signal_variance, hyper.length_scale,
    )


@lru_cache(maxsize=None)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _gl_nodes(lo: float, hi: float, n: int):
    x, w = _leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), w * half


def quadrature_oracle(ri: Rect, rj: Rect, hyper: Hyperparams, n_points: int = 64) -> float:
    """Gauss-Legendre evaluation of the averaged covariance integral.

    Tensor-product rule with ``n_points`` nodes per axis per rectangle.  The
    Gaussian integrand factorizes over the two axes, so the 4D sum is taken
    as a product of two 2D sums; the kernel values themselves are computed
    pointwise with exp, independently of the erf-based closed form.
    """
    if n_points < 2:
        raise ValueError("need at least 2 quadrature points per axis")
    ell2 = 2.0 * hyper.length_scale ** 2

    def axis_sum(lo_i, hi_i, lo_j, hi_j):
        xi, wi = _gl_nodes(lo_i, hi_i, n_points)
        xj, wj = _gl_nodes(lo_j, hi_j, n_points)
        g = np.exp(-((xi[:, None] - xj[None, :]) ** 2) / ell2)
        return wi @ g @ wj

    sx = axis_sum(ri.x_min, ri.x_max, rj.x_min, rj.x_max)
    sy = axis_sum(ri.y_min, ri.y_max, rj.y_min, rj.y_max)
    return hyper.signal_variance * sx * sy / (ri.area * rj.area)
