"""
Census transform, Hamming matching cost and the discrete disparity-matching
cost (DDC) blend with a sparse disparity prior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import prange

from ._parallel import njit, pjit
from .imagecore import GrayImage, InputError, SparseDisparityMap

#: fixed-point multiplier applied to blended costs before integer rounding
COST_SCALE = 16
#: upper bound of any scaled cost cell
COST_CAP = 4095 * COST_SCALE
# guards half-up rounding against float noise just below .5
_ROUND_EPS = 1e-7


@dataclass(frozen=True, eq=False)
class CensusImage:
    """Per-pixel census bit strings (uint64) and the number of bits per code."""

    codes: np.ndarray
    nbits: int

    @property
    def width(self):
        return self.codes.shape[1]

    @property
    def height(self):
        return self.codes.shape[0]

    @property
    def shape(self):
        return self.codes.shape


@dataclass(frozen=True, eq=False)
class CostVolume:
    """uint16 costs of shape (height, width, dmax).

    ``scale`` is the number of cost units per census bit: 1 for a raw
    Hamming volume, COST_SCALE after blending.
    """

    costs: np.ndarray
    scale: int = 1

    def __post_init__(self):
        costs = self.costs
        if costs.ndim != 3 or 0 in costs.shape:
            raise InputError(f"cost volume must be (height, width, dmax), got {costs.shape}")
        if costs.dtype != np.uint16:
            if costs.min() < 0 or costs.max() > COST_CAP:
                raise InputError("costs must lie in [0, COST_CAP]")
            object.__setattr__(self, "costs", np.ascontiguousarray(costs, dtype=np.uint16))
        elif not costs.flags.c_contiguous:
            object.__setattr__(self, "costs", np.ascontiguousarray(costs))

    @property
    def height(self):
        return self.costs.shape[0]

    @property
    def width(self):
        return self.costs.shape[1]

    @property
    def dmax(self):
        return self.costs.shape[2]

    def scaled(self, scale=COST_SCALE) -> "CostVolume":
        """Same costs expressed with ``scale`` units per census bit."""
        if scale % self.scale:
            raise ValueError(f"cannot rescale from {self.scale} to {scale}")
        factor = scale // self.scale
        out = np.minimum(self.costs.astype(np.uint32) * factor, COST_CAP).astype(np.uint16)
        return CostVolume(out, scale)


@njit
def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


@pjit
def _census_kernel(img, win_w, win_h):
    h, w = img.shape
    rx = win_w // 2
    ry = win_h // 2
    out = np.zeros((h, w), np.uint64)
    for y in prange(h):
        for x in range(w):
            c = img[y, x]
            code = np.uint64(0)
            bit = np.uint64(0)
            for dy in range(-ry, ry + 1):
                yy = min(max(y + dy, 0), h - 1)
                for dx in range(-rx, rx + 1):
                    if dy == 0 and dx == 0:
                        continue
                    xx = min(max(x + dx, 0), w - 1)
                    if img[yy, xx] < c:
                        code |= np.uint64(1) << bit
                    bit += np.uint64(1)
            out[y, x] = code
    return out


def census_transform(img: GrayImage, window=(9, 7)) -> CensusImage:
    """Census-transform an image.

    Bit ``i`` of a code is set when the i-th neighbour (row-major order over
    the window, centre skipped) is strictly darker than the centre. Samples
    beyond the border are edge-replicated.

    Args:
        img: source image.
        window: (width, height), both odd, at most 64 cells.
    """
    win_w, win_h = window
    if win_w % 2 == 0 or win_h % 2 == 0 or win_w < 1 or win_h < 1:
        raise ValueError(f"census window sides must be odd, got {window}")
    if win_w * win_h > 64:
        raise ValueError(f"census window {window} needs more than 64 bits")
    if win_w > img.width or win_h > img.height:
        raise InputError(f"census window {window} larger than image {img.width}x{img.height}")
    codes = _census_kernel(img.data, win_w, win_h)
    return CensusImage(codes, win_w * win_h - 1)


@pjit
def _hamming_kernel(base, match, dmax, out_of_range):
    h, w = base.shape
    out = np.empty((h, w, dmax), np.uint16)
    for y in prange(h):
        for x in range(w):
            b = base[y, x]
            top = min(dmax, x + 1)
            for d in range(top):
                out[y, x, d] = _popcount64(b ^ match[y, x - d])
            for d in range(top, dmax):
                out[y, x, d] = out_of_range
    return out


def stereo_cost(base: CensusImage, match: CensusImage, dmax: int) -> CostVolume:
    """Raw Hamming cost volume: cost(p, d) = popcount(base[p] ^ match[p - (d, 0)]).

    Disparities that leave the matching image (d > x) get the maximum census
    distance.
    """
    if base.shape != match.shape:
        raise InputError(f"census images differ in size: {base.shape} vs {match.shape}")
    if base.nbits != match.nbits:
        raise InputError("census images use different windows")
    if dmax < 1:
        raise ValueError("dmax must be positive")
    costs = _hamming_kernel(base.codes, match.codes, dmax, base.nbits)
    return CostVolume(costs, 1)


@njit
def hamming_at(base_codes, match_codes, y, x, d, nbits):
    """Raw Hamming cost of one (pixel, disparity) pair; out of frame gives ``nbits``."""
    if d > x:
        return nbits
    return _popcount64(base_codes[y, x] ^ match_codes[y, x - d])


@pjit
def _ddc_kernel(costs, factor, prior, prior_valid, alpha, q1, q2, scale, cap, eps):
    h, w, dmax = costs.shape
    out = np.empty((h, w, dmax), np.uint16)
    keep = 1.0 - alpha
    pen1 = alpha * q1 * scale
    pen2 = alpha * q2 * scale
    for y in prange(h):
        for x in range(w):
            if not prior_valid[y, x]:
                for d in range(dmax):
                    out[y, x, d] = min(np.int64(costs[y, x, d]) * factor, cap)
                continue
            dp = prior[y, x]
            for d in range(dmax):
                stereo = keep * (np.float64(costs[y, x, d]) * factor)
                diff = abs(d - dp)
                if diff == 0:
                    v = stereo
                elif diff == 1:
                    v = stereo + pen1
                else:
                    v = stereo + pen2
                out[y, x, d] = min(np.int64(np.floor(v + 0.5 + eps)), cap)
    return out


def ddc_fuse(stereo: CostVolume, prior: SparseDisparityMap, params, scale=COST_SCALE) -> CostVolume:
    """Blend a Hamming volume with the discrete disparity-matching cost.

    Where the prior is valid the cell becomes
    ``round((1 - alpha) * H * S + alpha * {0, Q_1, Q_2} * S)`` depending on
    whether ``|d - prior|`` is 0, 1 or larger; elsewhere it is ``H * S``.
    The result is expressed with S = ``scale`` units per bit (COST_SCALE in
    the pipeline) and capped at COST_CAP.
    """
    if (stereo.height, stereo.width) != prior.shape:
        raise InputError(f"prior {prior.shape} does not match cost volume {stereo.costs.shape[:2]}")
    if params.Q_1 > params.Q_2:
        raise ValueError("DDC needs Q_1 <= Q_2")
    if scale % stereo.scale:
        raise ValueError(f"cannot blend a volume with scale {stereo.scale} into scale {scale}")
    factor = scale // stereo.scale
    costs = _ddc_kernel(
        stereo.costs,
        factor,
        prior.values,
        prior.valid,
        float(params.alpha),
        float(params.Q_1),
        float(params.Q_2),
        float(scale),
        COST_CAP,
        _ROUND_EPS,
    )
    return CostVolume(costs, scale)
