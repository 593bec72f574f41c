"""
Semi-global cost aggregation, winner-take-all selection and parabola
subpixel refinement.

Each path is named by its direction of travel: ``"E"`` starts at the west
border and moves east, ``"SE"`` starts at the north/west borders and moves
down-right, and so on. A path's predecessor of pixel p is p - r.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import prange

from ._parallel import njit, pjit
from .cost import CostVolume
from .imagecore import DISP_SCALE, DenseDisparityMap

#: (dx, dy) step of every supported path
PATH_STEPS = {
    "E": (1, 0),
    "W": (-1, 0),
    "S": (0, 1),
    "N": (0, -1),
    "SE": (1, 1),
    "SW": (-1, 1),
    "NE": (1, -1),
    "NW": (-1, -1),
}
ALL_PATHS = ("E", "W", "S", "N", "SE", "SW", "NE", "NW")


@dataclass(frozen=True, eq=False)
class AggregatedVolume:
    """Per-cell sum of path costs, uint32 of shape (height, width, dmax)."""

    sums: np.ndarray
    paths: tuple = ALL_PATHS

    @property
    def height(self):
        return self.sums.shape[0]

    @property
    def width(self):
        return self.sums.shape[1]

    @property
    def dmax(self):
        return self.sums.shape[2]


@njit
def _path_step(prev, prev_min, c, p1, p2, out):
    """One step of the path recursion; writes L(p, .) to ``out`` and returns its minimum."""
    n = c.shape[0]
    jump = prev_min + p2
    lo = np.int32(2147483647)
    if n == 1:
        v = np.int32(c[0]) + min(prev[0], jump) - prev_min
        out[0] = v
        return v
    v = np.int32(c[0]) + min(min(prev[0], prev[1] + p1), jump) - prev_min
    out[0] = v
    lo = min(lo, v)
    for d in range(1, n - 1):
        best = min(min(prev[d], prev[d - 1] + p1), min(prev[d + 1] + p1, jump))
        v = np.int32(c[d]) + best - prev_min
        out[d] = v
        lo = min(lo, v)
    v = np.int32(c[n - 1]) + min(min(prev[n - 1], prev[n - 2] + p1), jump) - prev_min
    out[n - 1] = v
    lo = min(lo, v)
    return lo


@njit
def _path_start(c, out):
    lo = np.int32(2147483647)
    for d in range(c.shape[0]):
        v = np.int32(c[d])
        out[d] = v
        lo = min(lo, v)
    return lo


@pjit
def _sweep_horizontal(costs, total, dx, p1, p2):
    h, w, dmax = costs.shape
    for y in prange(h):
        buf_a = np.empty(dmax, np.int32)
        buf_b = np.empty(dmax, np.int32)
        x = 0 if dx > 0 else w - 1
        lo = _path_start(costs[y, x], buf_a)
        for d in range(dmax):
            total[y, x, d] += buf_a[d]
        for _ in range(1, w):
            x += dx
            lo = _path_step(buf_a, lo, costs[y, x], p1, p2, buf_b)
            for d in range(dmax):
                total[y, x, d] += buf_b[d]
            buf_a, buf_b = buf_b, buf_a


@pjit
def _sweep_vertical(costs, total, dy, dxs, p1, p2):
    """Row-by-row sweep for every path with vertical step ``dy`` and horizontal steps ``dxs``."""
    h, w, dmax = costs.shape
    k = dxs.shape[0]
    prev = np.empty((k, w, dmax), np.int32)
    cur = np.empty((k, w, dmax), np.int32)
    prev_min = np.empty((k, w), np.int32)
    cur_min = np.empty((k, w), np.int32)
    y = 0 if dy > 0 else h - 1
    for x in prange(w):
        for j in range(k):
            prev_min[j, x] = _path_start(costs[y, x], prev[j, x])
            for d in range(dmax):
                total[y, x, d] += prev[j, x, d]
    for _ in range(1, h):
        y += dy
        for x in prange(w):
            for j in range(k):
                px = x - dxs[j]
                if px < 0 or px >= w:
                    cur_min[j, x] = _path_start(costs[y, x], cur[j, x])
                else:
                    cur_min[j, x] = _path_step(prev[j, px], prev_min[j, px], costs[y, x], p1, p2, cur[j, x])
                for d in range(dmax):
                    total[y, x, d] += cur[j, x, d]
        prev, cur = cur, prev
        prev_min, cur_min = cur_min, prev_min


def _scaled_penalties(params, scale):
    p1 = int(round(params.P_1 * scale))
    p2 = int(round(params.P_2 * scale))
    if not 0 < p1 <= p2:
        raise ValueError(f"need 0 < P_1 <= P_2 after scaling, got {p1}, {p2}")
    return p1, p2


def aggregate(volume: CostVolume, params, paths=ALL_PATHS) -> AggregatedVolume:
    """Sum the path costs of every requested path.

    Penalties ``P_1``/``P_2`` are given in census bits and multiplied by the
    volume's ``scale``. At a path's first pixel L = C; afterwards L follows the
    min-plus recursion with the predecessor minimum subtracted.

    Args:
        volume: matching costs.
        params: anything with ``P_1`` and ``P_2`` attributes.
        paths: subset of ALL_PATHS.

    Returns:
        AggregatedVolume whose sums are uint32.
    """
    paths = tuple(paths)
    unknown = set(paths) - set(PATH_STEPS)
    if unknown or not paths:
        raise ValueError(f"unknown or empty path set: {sorted(unknown) or paths}")
    if len(set(paths)) != len(paths):
        raise ValueError(f"duplicate paths in {paths}")
    p1, p2 = _scaled_penalties(params, volume.scale)
    costs = volume.costs
    total = np.zeros(costs.shape, np.uint32)
    for name in paths:
        dx, dy = PATH_STEPS[name]
        if dy == 0:
            _sweep_horizontal(costs, total, dx, p1, p2)
    for dy in (1, -1):
        dxs = [PATH_STEPS[n][0] for n in paths if PATH_STEPS[n][1] == dy]
        if dxs:
            _sweep_vertical(costs, total, dy, np.array(dxs, np.int64), p1, p2)
    return AggregatedVolume(total, paths)


@pjit
def _winner_kernel(sums, subpixel, scale):
    h, w, dmax = sums.shape
    out = np.empty((h, w), np.int32)
    for y in prange(h):
        for x in range(w):
            s = sums[y, x]
            best = 0
            for d in range(1, dmax):
                if s[d] < s[best]:
                    best = d
            offset = 0.0
            if subpixel and 0 < best < dmax - 1:
                a = np.float64(s[best - 1])
                b = np.float64(s[best])
                c = np.float64(s[best + 1])
                denom = a - 2.0 * b + c
                if denom != 0.0:
                    offset = (a - c) / (2.0 * denom)
                    offset = min(max(offset, -0.5), 0.5)
            out[y, x] = np.int32(np.floor((best + offset) * scale + 0.5))
    return out


def select_winner(agg: AggregatedVolume, subpixel=True) -> DenseDisparityMap:
    """Winner-take-all disparity with parabola refinement.

    Ties go to the smaller disparity. The parabola through the winner and
    its two neighbours gives an offset clamped to [-0.5, 0.5]; it is skipped
    at the first/last disparity, for ``dmax < 2`` and for zero curvature.
    """
    values = _winner_kernel(agg.sums, bool(subpixel and agg.dmax >= 2), DISP_SCALE)
    return DenseDisparityMap(values, np.ones(values.shape, bool))


@pjit
def _match_view_kernel(sums, scale):
    h, w, dmax = sums.shape
    out = np.empty((h, w), np.int32)
    for y in prange(h):
        for x in range(w):
            top = min(dmax, w - x)
            best = 0
            best_cost = sums[y, x, 0]
            for d in range(1, top):
                v = sums[y, x + d, d]
                if v < best_cost:
                    best_cost = v
                    best = d
            out[y, x] = best * scale
    return out


def winner_from_match_view(agg: AggregatedVolume) -> DenseDisparityMap:
    """Integer disparity of each matching-image pixel read off the base-view sums.

    d'(q) = argmin over d with q.x + d < width of sums[(q.x + d, q.y), d],
    smallest d on ties.
    """
    values = _match_view_kernel(agg.sums, DISP_SCALE)
    return DenseDisparityMap(values, np.ones(values.shape, bool))
