"""NumPy twin of the compiled kernel core.

Selected at import time when ``argp._kernelcore`` is unavailable or when
``ARGP_PURE_PYTHON=1`` is set.  Function signatures, branch cutoffs and the
order of floating-point operations mirror the Cython module so the two stay
interchangeable to rounding noise.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc

SQRT_PI = math.sqrt(math.pi)
SERIES_CUTOFF = 0.1


def _favg_vec(a0, a1, b0, b1, s):
    """Average of exp(-(x-y)^2/s^2) over interval pairs, elementwise."""
    a0 = np.asarray(a0, dtype=np.float64)
    a1 = np.asarray(a1, dtype=np.float64)
    b0 = np.asarray(b0, dtype=np.float64)
    b1 = np.asarray(b1, dtype=np.float64)
    # Canonical order per pair, for exact symmetry under interval swap; the
    # right-most interval goes first so disjoint pairs keep all z >= 0, the
    # orientation in which the erfc branch stays relatively accurate.
    swap = (b0 > a0) | ((b0 == a0) & (b1 > a1))
    a0, b0 = np.where(swap, b0, a0), np.where(swap, a0, b0)
    a1, b1 = np.where(swap, b1, a1), np.where(swap, a1, b1)

    z1 = a1 - b0
    z2 = a0 - b0
    z3 = a1 - b1
    z4 = a0 - b1
    wa = a1 - a0
    wb = b1 - b0
    zmax = np.maximum.reduce([np.abs(z1), np.abs(z2), np.abs(z3), np.abs(z4)])

    # series branch (near-constant kernel over both intervals)
    u1, u2, u3, u4 = z1 / s, z2 / s, z3 / s, z4 / s
    p1, p2, p3, p4 = u1 * u1, u2 * u2, u3 * u3, u4 * u4
    s4 = p1 * p1 - p2 * p2 - p3 * p3 + p4 * p4
    s6 = (p1 * p1) * p1 - (p2 * p2) * p2 - (p3 * p3) * p3 + (p4 * p4) * p4
    s8 = (p1 * p1) * (p1 * p1) - (p2 * p2) * (p2 * p2) \
        - (p3 * p3) * (p3 * p3) + (p4 * p4) * (p4 * p4)
    s10 = (p1 * p1) * (p1 * p1) * p1 - (p2 * p2) * (p2 * p2) * p2 \
        - (p3 * p3) * (p3 * p3) * p3 + (p4 * p4) * (p4 * p4) * p4
    series = 1.0 + (s * s / (wa * wb)) * (
        -s4 / 12.0 + s6 / 60.0 - s8 / 336.0 + s10 / 2160.0
    )

    # erfc branch (general case, stable in the far tail)
    def etilde(z):
        u = z / s
        return (s / SQRT_PI) * np.exp(-u * u) - z * erfc(u)

    general = (s * SQRT_PI / 2.0) * (
        etilde(z1) - etilde(z2) - etilde(z3) + etilde(z4)
    ) / (wa * wb)

    return np.where(zmax <= SERIES_CUTOFF * s, series, general)


def avg_factor_1d(a0, a1, b0, b1, ell):
    """Averaged 1D double integral of the unit SE kernel over two intervals."""
    return float(_favg_vec(a0, a1, b0, b1, ell * math.sqrt(2.0)))


def cov_pair(ax0, ax1, ay0, ay1, bx0, bx1, by0, by1, sigma2, ell):
    """Averaged SE covariance between rectangles a and b."""
    s = ell * math.sqrt(2.0)
    return float(sigma2 * _favg_vec(ax0, ax1, bx0, bx1, s) * _favg_vec(ay0, ay1, by0, by1, s))


def _factor_table(lo, hi, s):
    u = lo.shape[0]
    p, q = np.triu_indices(u)
    vals = _favg_vec(lo[p], hi[p], lo[q], hi[q], s)
    table = np.empty((u, u), dtype=np.float64)
    table[p, q] = vals
    table[q, p] = vals
    return table


def cov_matrix(ux_lo, ux_hi, ix, uy_lo, uy_hi, iy, sigma2, ell):
    """Dense symmetric covariance over cells given per-axis unique intervals.

    Same contract as the compiled twin: per-axis factor tables over the
    unique intervals, then an outer gather-product over cell pairs.
    """
    s = ell * math.sqrt(2.0)
    fx = _factor_table(np.asarray(ux_lo), np.asarray(ux_hi), s)
    fy = _factor_table(np.asarray(uy_lo), np.asarray(uy_hi), s)
    return sigma2 * (fx[np.ix_(ix, ix)] * fy[np.ix_(iy, iy)])
