"""
KITTI-style disparity metrics.

Coverage is the share of ground-truth pixels with a valid estimate. The
covered error counts bad pixels among those; the total error counts bad
pixels over all ground-truth pixels after background interpolation. A pixel
is bad when it is off by 3 px or more. Frames are pooled by pixel counts.
"""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass, field

import cv2
import numpy as np

from .._parallel import njit
from ..imagecore import DISP_SCALE, DenseDisparityMap, InputError

#: error threshold in pixels
BAD_PIXEL_THRESHOLD = 3.0
#: relative clause of the KITTI 2015 outlier rule
RELATIVE_THRESHOLD = 0.05

CSV_COLUMNS = ("frame_id", "coverage_pct", "covered_error_pct", "total_error_pct")


class InterpolationWarning(UserWarning):
    """Background interpolation had nothing to interpolate from."""


@njit
def _fill_rows(values, valid):
    h, w = values.shape
    out = values.copy()
    filled = np.zeros(h, np.bool_)
    for y in range(h):
        last = -1
        for x in range(w + 1):
            if x < w and not valid[y, x]:
                continue
            # run of invalid pixels in (last, x)
            if x - last > 1:
                if last < 0 and x == w:
                    break
                if last < 0:
                    fill = values[y, x]
                elif x == w:
                    fill = values[y, last]
                else:
                    fill = min(values[y, last], values[y, x])
                for i in range(last + 1, x):
                    out[y, i] = fill
            filled[y] = True
            last = x
    return out, filled


def background_interpolate(dmap: DenseDisparityMap) -> DenseDisparityMap:
    """Fill invalid pixels row by row with the farther (smaller) neighbouring disparity.

    Runs touching the left or right border copy their single neighbour.
    Rows without any valid pixel copy the nearest filled row below, else the
    nearest one above. A map without valid pixels is returned unchanged with
    an InterpolationWarning.
    """
    if not dmap.valid.any():
        warnings.warn("no valid disparity to interpolate from", InterpolationWarning, stacklevel=2)
        return dmap
    values, filled = _fill_rows(dmap.values, dmap.valid)
    rows = np.flatnonzero(filled)
    for y in np.flatnonzero(~filled):
        below = rows[rows > y]
        src = below[0] if below.size else rows[rows < y][-1]
        values[y] = values[src]
    return DenseDisparityMap(values, np.ones(dmap.shape, bool))


def bad_pixels(est_values, gt_values, relative=False):
    """Boolean outlier mask for fixed-point disparity arrays."""
    err = np.abs(est_values.astype(np.int64) - gt_values.astype(np.int64))
    bad = err >= BAD_PIXEL_THRESHOLD * DISP_SCALE
    if relative:
        bad &= err >= RELATIVE_THRESHOLD * gt_values
    return bad


@dataclass(frozen=True)
class FrameEval:
    """Pixel counts of one evaluated frame."""

    frame_id: str
    n_gt: int
    n_covered: int
    covered_errors: int
    total_errors: int

    @property
    def coverage_pct(self):
        return 100.0 * self.n_covered / self.n_gt

    @property
    def covered_error_pct(self):
        return 100.0 * self.covered_errors / self.n_covered if self.n_covered else 0.0

    @property
    def total_error_pct(self):
        return 100.0 * self.total_errors / self.n_gt

    def as_row(self):
        return (self.frame_id, self.coverage_pct, self.covered_error_pct, self.total_error_pct)


@dataclass
class EvalReport:
    """Per-frame rows plus pixel-pooled totals."""

    rows: list = field(default_factory=list)

    def add(self, row: FrameEval):
        self.rows.append(row)

    @property
    def frame_count(self):
        return len(self.rows)

    @property
    def pooled(self) -> FrameEval:
        if not self.rows:
            raise ValueError("empty report")
        return FrameEval(
            "pooled",
            sum(r.n_gt for r in self.rows),
            sum(r.n_covered for r in self.rows),
            sum(r.covered_errors for r in self.rows),
            sum(r.total_errors for r in self.rows),
        )

    @property
    def coverage(self):
        return self.pooled.coverage_pct

    @property
    def covered_error(self):
        return self.pooled.covered_error_pct

    @property
    def total_error(self):
        return self.pooled.total_error_pct

    def write_csv(self, path):
        with open(os.fspath(path), "w", newline="", encoding="utf-8") as f:
            write_report_rows(csv.writer(f), self.rows + [self.pooled])


def write_report_rows(writer, rows):
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        fid, cov, cerr, terr = r.as_row()
        writer.writerow((fid, f"{cov:.4f}", f"{cerr:.4f}", f"{terr:.4f}"))


def evaluate(est: DenseDisparityMap, gt: DenseDisparityMap, frame_id="0", relative=False) -> FrameEval:
    """Score one estimate against ground truth; only valid-gt pixels count."""
    if est.shape != gt.shape:
        raise InputError(f"estimate {est.shape} and ground truth {gt.shape} differ in size")
    mask = gt.valid
    n_gt = int(mask.sum())
    if n_gt == 0:
        raise InputError("ground truth has no valid pixels")
    covered = mask & est.valid
    bad = bad_pixels(est.values, gt.values, relative)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", InterpolationWarning)
        filled = background_interpolate(est)
    bad_filled = bad_pixels(filled.values, gt.values, relative) | ~filled.valid
    return FrameEval(
        str(frame_id),
        n_gt,
        int(covered.sum()),
        int((bad & covered).sum()),
        int((bad_filled & mask).sum()),
    )


def evaluate_sparse(est, gt: DenseDisparityMap, frame_id="0", relative=False) -> FrameEval:
    """Coverage and covered error of a sparse map (no interpolation meaning for sparse priors)."""
    return evaluate(est.to_dense(), gt, frame_id, relative)


def error_map(est: DenseDisparityMap, gt: DenseDisparityMap) -> np.ndarray:
    """uint8 visualisation: |est - gt| clamped at 8 px, times 32; 0 where gt is invalid."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", InterpolationWarning)
        filled = background_interpolate(est)
    err = np.abs(filled.values.astype(np.int64) - gt.values) / DISP_SCALE
    img = np.minimum(np.minimum(err, 8.0) * 32.0, 255.0)
    img[~(gt.valid & filled.valid)] = 0
    return img.astype(np.uint8)


def write_error_map(est, gt, path):
    if not cv2.imwrite(os.fspath(path), error_map(est, gt)):
        raise InputError(f"cannot write {path}")
