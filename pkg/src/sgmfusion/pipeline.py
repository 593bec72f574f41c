"""
End-to-end fusion of one frame.

Variants:
    sgm    stereo only: census cost, SGM, left-right check (LiDAR ignored)
    dsgm   SGM on the DDC-blended cost, stereo-LiDAR check
    sdsgm  as dsgm, but the DDC prior is the semidensified LiDAR map
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

from .consistency import consistency_check
from .cost import COST_SCALE, census_transform, ddc_fuse, stereo_cost
from .imagecore import DenseDisparityMap, FusionParams, GrayImage, InputError, SparseDisparityMap
from .semidense import semidensify
from .sgm import ALL_PATHS, aggregate, select_winner, winner_from_match_view

VARIANTS = ("sgm", "dsgm", "sdsgm")


@dataclass(eq=False)
class FrameResult:
    disparity: DenseDisparityMap        # after the consistency check
    raw: DenseDisparityMap              # winner-take-all output before the check
    match_view: DenseDisparityMap
    prior: SparseDisparityMap | None    # the map the DDC used (sparse or semidense)
    timings: dict = field(default_factory=dict)
    total_time: float = 0.0


class _Stopwatch:
    def __init__(self):
        self.timings = {}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0


def default_check(variant):
    return "stereo" if variant == "sgm" else "stereo-lidar"


def fuse_frame(base: GrayImage, match: GrayImage, sparse: SparseDisparityMap | None,
               params: FusionParams | None = None, variant="sdsgm", paths=ALL_PATHS,
               check=None) -> FrameResult:
    """Run one variant of the fusion pipeline on a rectified pair.

    Args:
        base, match: rectified base (left) and matching (right) images.
        sparse: LiDAR disparity prior aligned with ``base``; may be None for sgm.
        params: FusionParams, defaults to ``FusionParams()``.
        variant: one of VARIANTS.
        paths: aggregation paths.
        check: consistency mode override (see consistency.MODES).
    """
    params = params or FusionParams()
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if base.shape != match.shape:
        raise InputError(f"stereo pair differs in size: {base.shape} vs {match.shape}")
    if sparse is None:
        if variant != "sgm":
            raise InputError(f"variant {variant} needs a sparse disparity map")
        sparse = SparseDisparityMap.empty(*base.shape)
    elif sparse.shape != base.shape:
        raise InputError(f"sparse map {sparse.shape} does not match images {base.shape}")
    check = check or default_check(variant)

    watch = _Stopwatch()
    t0 = time.perf_counter()
    with watch.stage("census"):
        cb = census_transform(base, params.census_window)
        cm = census_transform(match, params.census_window)
    prior = None
    if variant == "sdsgm":
        with watch.stage("semidensify"):
            prior = semidensify(cb, cm, sparse, params)
    elif variant == "dsgm":
        prior = sparse
    with watch.stage("cost"):
        hamming = stereo_cost(cb, cm, params.dmax)
        volume = hamming.scaled(COST_SCALE) if prior is None else ddc_fuse(hamming, prior, params)
        del hamming
    with watch.stage("aggregate"):
        agg = aggregate(volume, params, paths)
        del volume
    with watch.stage("winner"):
        raw = select_winner(agg)
        dprime = winner_from_match_view(agg)
        del agg
    with watch.stage("consistency"):
        final = consistency_check(raw, dprime, sparse, params, mode=check)
    total = time.perf_counter() - t0
    return FrameResult(final, raw, dprime, prior, watch.timings, total)
