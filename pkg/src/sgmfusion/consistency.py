"""
Three-view stereo-LiDAR consistency check.

A base-view disparity survives when it agrees with the matching view
(left-right check) or with some LiDAR disparity in a window around it. The
single-sensor checks are available for comparison.
"""

from __future__ import annotations

import numpy as np
from numba import prange

from ._parallel import pjit
from .imagecore import DISP_SCALE, DenseDisparityMap, InputError, SparseDisparityMap

MODES = ("stereo-lidar", "stereo", "lidar")


def sparse_rows(sparse: SparseDisparityMap):
    """Compressed-row layout of the valid entries: (row_ptr, cols, disparities)."""
    ys, xs = np.nonzero(sparse.valid)
    row_ptr = np.zeros(sparse.height + 1, np.int64)
    np.cumsum(np.bincount(ys, minlength=sparse.height), out=row_ptr[1:])
    return row_ptr, xs.astype(np.int64), sparse.values[ys, xs].astype(np.int64)


@pjit
def _check_kernel(dstar, dstar_valid, dprime, dprime_valid, row_ptr, cols, disp,
                  radius, lidar_tol, use_stereo, use_lidar, scale):
    h, w = dstar.shape
    keep = np.zeros((h, w), np.bool_)
    for y in prange(h):
        y0 = max(0, y - radius)
        y1 = min(h - 1, y + radius)
        for x in range(w):
            if not dstar_valid[y, x]:
                continue
            v = np.int64(dstar[y, x])
            if use_stereo:
                xm = x - (v + scale // 2) // scale
                if 0 <= xm < w and dprime_valid[y, xm] and abs(v - dprime[y, xm]) <= scale:
                    keep[y, x] = True
                    continue
            if not use_lidar:
                continue
            lo = x - radius
            hi = x + radius
            found = False
            for yy in range(y0, y1 + 1):
                a = row_ptr[yy]
                b = row_ptr[yy + 1]
                i = a + np.searchsorted(cols[a:b], lo)
                while i < b and cols[i] <= hi:
                    if abs(v - disp[i] * scale) <= lidar_tol:
                        found = True
                        break
                    i += 1
                if found:
                    break
            keep[y, x] = found
    return keep


def consistency_check(dstar: DenseDisparityMap, dprime: DenseDisparityMap, sparse: SparseDisparityMap,
                      params, mode="stereo-lidar") -> DenseDisparityMap:
    """Invalidate base-view disparities that no other view confirms.

    Args:
        dstar: base-view disparities.
        dprime: matching-view disparities, indexed by matching-image column.
        sparse: the original LiDAR prior (not a semidensified one).
        params: provides ``T_c`` (pixels, inclusive) and ``r_c`` (window
            radius, clipped at the border).
        mode: ``"stereo-lidar"`` keeps a pixel if either check passes,
            ``"stereo"`` runs only the left-right check (|d* - d'| <= 1 at
            column x - round(d*)), ``"lidar"`` only the LiDAR window check.

    Returns:
        copy of ``dstar`` with rejected pixels invalid.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not (dstar.shape == dprime.shape == sparse.shape):
        raise InputError(f"size mismatch: {dstar.shape}, {dprime.shape}, {sparse.shape}")
    if params.T_c < 0 or params.r_c < 0:
        raise ValueError("T_c and r_c must be non-negative")
    row_ptr, cols, disp = sparse_rows(sparse)
    keep = _check_kernel(
        dstar.values,
        dstar.valid,
        dprime.values,
        dprime.valid,
        row_ptr,
        cols,
        disp,
        int(params.r_c),
        float(params.T_c) * DISP_SCALE,
        mode != "lidar",
        mode != "stereo",
        DISP_SCALE,
    )
    return dstar.with_valid(keep)
