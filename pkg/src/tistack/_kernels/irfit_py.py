"""NumPy implementation of the two-point inversion-recovery fit.

Per voxel, the amplitude is profiled out in closed form (for fixed t1 the
optimal non-negative pd is a scalar ratio), leaving a 1D minimization over
t1 that is solved by a log-spaced grid scan followed by golden-section
refinement of the bracketing interval.

The compiled kernel in _irfit_c.pyx implements the same procedure; both
must agree to within the t1 tolerance.
"""

from __future__ import annotations

import numpy as np

GOLDEN = 0.6180339887498949


def _recovery(t1, ti_long, ti_short, tr):
    """Relaxation factors of the signal model at both inversion times."""
    with np.errstate(divide="ignore", invalid="ignore"):
        e_tr = np.exp(-tr / t1)
        g_long = 1.0 - 2.0 * np.exp(-ti_long / t1) + e_tr
        g_short = 1.0 - 2.0 * np.exp(-ti_short / t1) + e_tr
    return g_long, g_short


def _neg_profiled_gain(t1, y_long, y_short, ti_long, ti_short, tr):
    """Objective: SSE(t1) minus the constant term, lower is better.

    SSE(t1) = sum(y^2) - max(s, 0)^2 / den with s = y.g and den = |g|^2,
    where pd has been profiled out subject to pd >= 0.
    """
    g_long, g_short = _recovery(t1, ti_long, ti_short, tr)
    s = y_long * g_long + y_short * g_short
    den = g_long * g_long + g_short * g_short
    return -np.square(np.maximum(s, 0.0)) / den


def fit_ir_two_point(
    y_long: np.ndarray,
    y_short: np.ndarray,
    ti_long: float,
    ti_short: float,
    tr: float,
    t1_min: float = 1.0,
    t1_max: float = 10000.0,
    t1_tol: float = 1e-4,
    n_grid: int = 64,
):
    """Fit (pd, t1) per voxel from one long-TI and one short-TI sample.

    Returns (pd, t1, valid) as float64/float64/uint8 arrays. Voxels with
    non-finite inputs, non-positive profiled amplitude, or a minimizer at
    the t1 bounds are flagged invalid and zeroed.
    """
    y_long = np.ascontiguousarray(y_long, dtype=np.float64)
    y_short = np.ascontiguousarray(y_short, dtype=np.float64)
    n = y_long.size

    finite = np.isfinite(y_long) & np.isfinite(y_short)
    yl = np.where(finite, y_long, 0.0)
    ys = np.where(finite, y_short, 0.0)

    grid = np.exp(np.linspace(np.log(t1_min), np.log(t1_max), n_grid))
    gl, gs = _recovery(grid, ti_long, ti_short, tr)
    den = gl * gl + gs * gs
    # (n, n_grid) objective; chunk to bound memory on large volumes
    best = np.empty(n, dtype=np.intp)
    chunk = max(1, (1 << 22) // n_grid)
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        s = np.outer(yl[sl], gl) + np.outer(ys[sl], gs)
        obj = -np.square(np.maximum(s, 0.0)) / den
        best[sl] = np.argmin(obj, axis=1)

    lo = grid[np.maximum(best - 1, 0)]
    hi = grid[np.minimum(best + 1, n_grid - 1)]

    def f(t1):
        return _neg_profiled_gain(t1, yl, ys, ti_long, ti_short, tr)

    width = hi - lo
    x1 = hi - GOLDEN * width
    x2 = lo + GOLDEN * width
    f1 = f(x1)
    f2 = f(x2)
    while np.max(hi - lo) > t1_tol:
        take_low = f1 < f2
        hi = np.where(take_low, x2, hi)
        lo = np.where(take_low, lo, x1)
        width = hi - lo
        x1_next = np.where(take_low, hi - GOLDEN * width, x2)
        x2_next = np.where(take_low, x1, lo + GOLDEN * width)
        f_new = f(np.where(take_low, x1_next, x2_next))
        f1, f2 = (
            np.where(take_low, f_new, f2),
            np.where(take_low, f1, f_new),
        )
        x1, x2 = x1_next, x2_next

    t1 = 0.5 * (lo + hi)
    g_long, g_short = _recovery(t1, ti_long, ti_short, tr)
    s = yl * g_long + ys * g_short
    pd = np.maximum(s, 0.0) / (g_long * g_long + g_short * g_short)

    margin = 10.0 * t1_tol
    valid = (
        finite
        & (pd > 0.0)
        & (t1 - t1_min > margin)
        & (t1_max - t1 > margin)
    )
    pd = np.where(valid, pd, 0.0)
    t1 = np.where(valid, t1, 0.0)
    return pd, t1, valid.astype(np.uint8)
