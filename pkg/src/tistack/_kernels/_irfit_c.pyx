# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled two-point inversion-recovery fit.

Same contract and numerical procedure as irfit_py.fit_ir_two_point:
profiled amplitude, log-spaced t1 grid scan, golden-section refinement.
The voxel loop runs without the GIL so callers can shard voxels across
threads.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, isfinite, log

cnp.import_array()

cdef double GOLDEN = 0.6180339887498949


cdef inline double _obj(double t1, double yl, double ys,
                        double ti_long, double ti_short, double tr) nogil:
    cdef double e_tr = exp(-tr / t1)
    cdef double gl = 1.0 - 2.0 * exp(-ti_long / t1) + e_tr
    cdef double gs = 1.0 - 2.0 * exp(-ti_short / t1) + e_tr
    cdef double s = yl * gl + ys * gs
    if s < 0.0:
        s = 0.0
    return -(s * s) / (gl * gl + gs * gs)


def fit_ir_two_point(cnp.ndarray[cnp.float64_t, ndim=1] y_long,
                     cnp.ndarray[cnp.float64_t, ndim=1] y_short,
                     double ti_long, double ti_short, double tr,
                     double t1_min=1.0, double t1_max=10000.0,
                     double t1_tol=1e-4, int n_grid=64):
    """Fit (pd, t1, valid) per voxel; see the NumPy twin for semantics."""
    cdef Py_ssize_t n = y_long.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pd = np.zeros(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t1 = np.zeros(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] valid = np.zeros(n, dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] grid = np.exp(
        np.linspace(log(t1_min), log(t1_max), n_grid))

    cdef double[::1] yl_v = y_long
    cdef double[::1] ys_v = y_short
    cdef double[::1] pd_v = pd
    cdef double[::1] t1_v = t1
    cdef unsigned char[::1] valid_v = valid
    cdef double[::1] grid_v = grid

    cdef double margin = 10.0 * t1_tol
    cdef Py_ssize_t i, k, best
    cdef double yl, ys, fk, fbest
    cdef double lo, hi, width, x1, x2, f1, f2, fn, t1_hat
    cdef double e_tr, gl, gs, s, den

    with nogil:
        for i in range(n):
            yl = yl_v[i]
            ys = ys_v[i]
            if not (isfinite(yl) and isfinite(ys)):
                continue

            best = 0
            fbest = _obj(grid_v[0], yl, ys, ti_long, ti_short, tr)
            for k in range(1, n_grid):
                fk = _obj(grid_v[k], yl, ys, ti_long, ti_short, tr)
                if fk < fbest:
                    fbest = fk
                    best = k

            lo = grid_v[best - 1] if best > 0 else grid_v[0]
            hi = grid_v[best + 1] if best < n_grid - 1 else grid_v[n_grid - 1]

            width = hi - lo
            x1 = hi - GOLDEN * width
            x2 = lo + GOLDEN * width
            f1 = _obj(x1, yl, ys, ti_long, ti_short, tr)
            f2 = _obj(x2, yl, ys, ti_long, ti_short, tr)
            while hi - lo > t1_tol:
                if f1 < f2:
                    hi = x2
                    width = hi - lo
                    x2 = x1
                    f2 = f1
                    x1 = hi - GOLDEN * width
                    f1 = _obj(x1, yl, ys, ti_long, ti_short, tr)
                else:
                    lo = x1
                    width = hi - lo
                    x1 = x2
                    f1 = f2
                    x2 = lo + GOLDEN * width
                    f2 = _obj(x2, yl, ys, ti_long, ti_short, tr)

            t1_hat = 0.5 * (lo + hi)
            e_tr = exp(-tr / t1_hat)
            gl = 1.0 - 2.0 * exp(-ti_long / t1_hat) + e_tr
            gs = 1.0 - 2.0 * exp(-ti_short / t1_hat) + e_tr
            s = yl * gl + ys * gs
            den = gl * gl + gs * gs
            if s <= 0.0:
                continue
            if t1_hat - t1_min <= margin or t1_max - t1_hat <= margin:
                continue
            pd_v[i] = s / den
            t1_v[i] = t1_hat
            valid_v[i] = 1

    return pd, t1, valid
