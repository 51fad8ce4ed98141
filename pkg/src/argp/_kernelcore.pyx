# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled core for rectangle-averaged squared-exponential covariances.

Hot path of prior-map construction: the covariance between two cells is a
product of one averaged double integral per axis, and a full map prior needs
one such product per cell pair.  The NumPy twin of this module is
``argp._kernelcore_py``; both expose the same functions and must agree to
floating-point noise (see the parity tests).
"""

import numpy as np

from libc.math cimport erfc, exp, fabs, sqrt, M_PI

cdef double SQRT_PI = sqrt(M_PI)
# Below this value of max(|z|)/s the four-term erfc expression loses relative
# accuracy to cancellation of its O(s) constants, while the even-moment series
# is already converged; switch branches there.
cdef double SERIES_CUTOFF = 0.1


cdef inline double _etilde(double z, double s) nogil:
    # Antiderivative helper: integral of erf(t/s) minus its linear growth,
    # written with erfc so that the far tail keeps relative accuracy.
    cdef double u = z / s
    return (s / SQRT_PI) * exp(-u * u) - z * erfc(u)


cdef double _favg(double a0, double a1, double b0, double b1, double s) nogil:
    """Average of exp(-(x-y)^2/s^2) for x in [a0,a1], y in [b0,b1], in (0, 1]."""
    cdef double t0, t1
    # Canonical argument order: the result is symmetric under swapping the
    # intervals, so put the right-most interval first.  This keeps every z
    # below non-negative for disjoint intervals, where the erfc form is
    # dominated by its (relatively accurate) Gaussian tail; the reversed
    # orientation would cancel O(|z|) linear terms instead and lose digits.
    if (b0 > a0) or (b0 == a0 and b1 > a1):
        t0 = a0
        t1 = a1
        a0 = b0
        a1 = b1
        b0 = t0
        b1 = t1
    cdef double z1 = a1 - b0
    cdef double z2 = a0 - b0
    cdef double z3 = a1 - b1
    cdef double z4 = a0 - b1
    cdef double wa = a1 - a0
    cdef double wb = b1 - b0
    cdef double zmax = fabs(z1)
    if fabs(z2) > zmax:
        zmax = fabs(z2)
    if fabs(z3) > zmax:
        zmax = fabs(z3)
    if fabs(z4) > zmax:
        zmax = fabs(z4)

    cdef double u1, u2, u3, u4
    cdef double p1, p2, p3, p4
    cdef double s4, s6, s8, s10
    if zmax <= SERIES_CUTOFF * s:
        # Even-moment series of the Gaussian; the quadratic term equals 1
        # exactly, so only the small corrections are summed.
        u1 = z1 / s
        u2 = z2 / s
        u3 = z3 / s
        u4 = z4 / s
        p1 = u1 * u1
        p2 = u2 * u2
        p3 = u3 * u3
        p4 = u4 * u4
        s4 = p1 * p1 - p2 * p2 - p3 * p3 + p4 * p4
        s6 = (p1 * p1) * p1 - (p2 * p2) * p2 - (p3 * p3) * p3 + (p4 * p4) * p4
        s8 = (p1 * p1) * (p1 * p1) - (p2 * p2) * (p2 * p2) \
            - (p3 * p3) * (p3 * p3) + (p4 * p4) * (p4 * p4)
        s10 = (p1 * p1) * (p1 * p1) * p1 - (p2 * p2) * (p2 * p2) * p2 \
            - (p3 * p3) * (p3 * p3) * p3 + (p4 * p4) * (p4 * p4) * p4
        return 1.0 + (s * s / (wa * wb)) * (
            -s4 / 12.0 + s6 / 60.0 - s8 / 336.0 + s10 / 2160.0
        )
    return (s * SQRT_PI / 2.0) * (
        _etilde(z1, s) - _etilde(z2, s) - _etilde(z3, s) + _etilde(z4, s)
    ) / (wa * wb)


def avg_factor_1d(double a0, double a1, double b0, double b1, double ell):
    """Averaged 1D double integral of the unit SE kernel over two intervals."""
    return _favg(a0, a1, b0, b1, ell * sqrt(2.0))


def cov_pair(double ax0, double ax1, double ay0, double ay1,
             double bx0, double bx1, double by0, double by1,
             double sigma2, double ell):
    """Averaged SE covariance between rectangles a and b."""
    cdef double s = ell * sqrt(2.0)
    return sigma2 * _favg(ax0, ax1, bx0, bx1, s) * _favg(ay0, ay1, by0, by1, s)


def cov_matrix(double[::1] ux_lo, double[::1] ux_hi, Py_ssize_t[::1] ix,
               double[::1] uy_lo, double[::1] uy_hi, Py_ssize_t[::1] iy,
               double sigma2, double ell):
    """Dense symmetric covariance over cells given per-axis unique intervals.

    ``ux_lo/ux_hi`` are the U unique x-intervals in sorted order and ``ix``
    maps each of the n cells to one of them (same for y).  The SE kernel
    factorizes per axis, so per-axis factor tables of size U x U and V x V
    cover all n^2 pairs.
    """
    cdef Py_ssize_t n = ix.shape[0]
    cdef Py_ssize_t U = ux_lo.shape[0]
    cdef Py_ssize_t V = uy_lo.shape[0]
    cdef double s = ell * sqrt(2.0)

    fx_arr = np.empty((U, U), dtype=np.float64)
    fy_arr = np.empty((V, V), dtype=np.float64)
    out_arr = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] fx = fx_arr
    cdef double[:, ::1] fy = fy_arr
    cdef double[:, ::1] out = out_arr

    cdef Py_ssize_t p, q, i, j
    cdef double v
    with nogil:
        for p in range(U):
            for q in range(p, U):
                v = _favg(ux_lo[p], ux_hi[p], ux_lo[q], ux_hi[q], s)
                fx[p, q] = v
                fx[q, p] = v
        for p in range(V):
            for q in range(p, V):
                v = _favg(uy_lo[p], uy_hi[p], uy_lo[q], uy_hi[q], s)
                fy[p, q] = v
                fy[q, p] = v
        for i in range(n):
            for j in range(i, n):
                v = sigma2 * fx[ix[i], ix[j]] * fy[iy[i], iy[j]]
                out[i, j] = v
                out[j, i] = v
    return out_arr
