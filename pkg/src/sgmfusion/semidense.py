"""Semidensification of a sparse disparity prior using raw census costs."""

from __future__ import annotations

import numpy as np
from numba import prange

from ._parallel import pjit
from .cost import CensusImage, hamming_at
from .imagecore import InputError, SparseDisparityMap


@pjit
def _semidense_kernel(base, match, nbits, values, valid, radius, threshold):
    h, w = values.shape
    out = values.copy()
    out_valid = valid.copy()
    for y in prange(h):
        y0 = max(0, y - radius)
        y1 = min(h - 1, y + radius)
        for x in range(w):
            x0 = max(0, x - radius)
            x1 = min(w - 1, x + radius)
            best_cost = nbits + 1
            best_d = -1
            for yy in range(y0, y1 + 1):
                for xx in range(x0, x1 + 1):
                    if not valid[yy, xx]:
                        continue
                    d = values[yy, xx]
                    c = hamming_at(base, match, y, x, d, nbits)
                    if c < best_cost or (c == best_cost and d < best_d):
                        best_cost = c
                        best_d = d
            if best_d >= 0 and best_cost < threshold:
                out[y, x] = best_d
                out_valid[y, x] = True
    return out, out_valid


def semidensify(base: CensusImage, match: CensusImage, sparse: SparseDisparityMap, params) -> SparseDisparityMap:
    """Propagate sparse disparities to pixels where they match well.

    Every pixel looks at the valid prior values inside its
    (2 r_s + 1)^2 window (clipped to the frame, own pixel included) and
    takes the one with the lowest raw Hamming cost at that pixel, smaller
    disparity first on ties, provided that cost is below ``T_s``. Otherwise
    the pixel keeps its own prior value or stays invalid. No smoothing is
    applied.
    """
    if base.shape != match.shape or base.shape != sparse.shape:
        raise InputError(
            f"size mismatch: base {base.shape}, match {match.shape}, sparse {sparse.shape}"
        )
    if params.r_s < 0 or params.T_s < 0:
        raise ValueError("r_s and T_s must be non-negative")
    values, valid = _semidense_kernel(
        base.codes,
        match.codes,
        base.nbits,
        sparse.values,
        sparse.valid,
        int(params.r_s),
        float(params.T_s),
    )
    return SparseDisparityMap(values, valid)
