"""
Raster types, fusion parameters and bit-exact PNG I/O.

Disparity maps keep validity in a separate boolean mask; the value array is
never used to signal "no measurement". Files follow the KITTI 16-bit
convention (stored = round(disparity * 256), stored 0 = invalid).
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, fields, replace

import cv2
import numpy as np

#: fixed-point resolution of dense disparities (1/256 pixel)
DISP_SCALE = 256
#: largest value a 16-bit disparity PNG can store
MAX_STORED = 65535
#: parameters a sweep may vary
SWEEPABLE = ("T_s", "r_s", "Q_1", "Q_2", "alpha", "T_c", "r_c")


class FusionError(Exception):
    """Base class for errors raised by this package."""


class InputError(FusionError, ValueError):
    """Unreadable, malformed or mismatched input data."""


class ConfigError(FusionError, ValueError):
    """Invalid parameter values."""


class DisparityRangeWarning(UserWarning):
    """Decoded disparities fell outside [0, dmax)."""


def round_half_up(x):
    """Round to the nearest integer, ties toward +inf, as int64."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, order="C", copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-channel 8-bit rectified image, stored as a (height, width) array."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise InputError(f"gray image must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise InputError("gray image has zero dimensions")
        if data.dtype != np.uint8:
            if data.size and (data.min() < 0 or data.max() > 255):
                raise InputError("gray image samples must lie in [0, 255]")
        object.__setattr__(self, "data", _frozen(data, np.uint8))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.data, other.data)


class _DisparityBase:
    values: np.ndarray
    valid: np.ndarray

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape

    def coverage(self) -> float:
        """Fraction of valid pixels."""
        return float(self.valid.mean())

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.values, other.values)
        )


def _check_disparity_arrays(values, valid, dtype):
    values = np.asarray(values)
    if valid is None:
        raise InputError("validity mask is required")
    valid = np.asarray(valid, dtype=bool)
    if values.ndim != 2 or values.shape != valid.shape:
        raise InputError(f"values {values.shape} and mask {valid.shape} must be equal 2-D shapes")
    if values.shape[0] < 1 or values.shape[1] < 1:
        raise InputError("disparity map has zero dimensions")
    values = np.where(valid, values, 0).astype(dtype)
    if np.any(values[valid] < 0):
        raise InputError("valid disparities must be non-negative")
    return _frozen(values, dtype), _frozen(valid, bool)


@dataclass(frozen=True, eq=False)
class SparseDisparityMap(_DisparityBase):
    """Integer disparities with an explicit validity mask.

    Entries outside ``valid`` are normalised to 0 and carry no meaning.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values, valid = _check_disparity_arrays(self.values, self.valid, np.int32)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def empty(cls, height, width):
        return cls(np.zeros((height, width), np.int32), np.zeros((height, width), bool))

    @classmethod
    def from_float(cls, disp):
        """Build from a float array where NaN or values < 0 mean invalid; rounds half-up."""
        disp = np.asarray(disp, dtype=np.float64)
        valid = np.isfinite(disp) & (disp >= 0)
        return cls(np.where(valid, round_half_up(np.where(valid, disp, 0)), 0), valid)

    def to_float(self):
        out = self.values.astype(np.float64)
        out[~self.valid] = np.nan
        return out

    def to_dense(self) -> "DenseDisparityMap":
        return DenseDisparityMap(self.values.astype(np.int32) * DISP_SCALE, self.valid)


@dataclass(frozen=True, eq=False)
class DenseDisparityMap(_DisparityBase):
    """Subpixel disparities in 1/256-pixel fixed point with an explicit validity mask."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values, valid = _check_disparity_arrays(self.values, self.valid, np.int32)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_float(cls, disp):
        disp = np.asarray(disp, dtype=np.float64)
        valid = np.isfinite(disp) & (disp >= 0)
        return cls(round_half_up(np.where(valid, disp, 0) * DISP_SCALE), valid)

    def to_float(self):
        """Disparities in pixels; invalid entries are NaN."""
        out = self.values / DISP_SCALE
        out[~self.valid] = np.nan
        return out

    def with_valid(self, valid) -> "DenseDisparityMap":
        return DenseDisparityMap(self.values, np.asarray(valid, bool) & self.valid)


@dataclass(frozen=True)
class FusionParams:
    """Every tunable of the fusion pipeline.

    Defaults use a 128 disparity range and a 9x7 census window. Costs (``P_1``, ``P_2``, ``Q_1``, ``Q_2``,
    ``T_s``) are in raw census-bit units; the internal cost scale is applied
    by the cost and aggregation stages.
    """

    T_s: float = 2
    r_s: int = 6
    P_1: int = 10
    P_2: int = 120
    Q_1: float = 5
    Q_2: float = 160
    alpha: float = 0.7
    T_c: float = 2
    r_c: int = 20
    dmax: int = 128
    census_width: int = 9
    census_height: int = 7
    #: also require a 5% relative error in the 3-px metric (KITTI 2015 rule)
    relative_error: bool = False

    def __post_init__(self):
        if not (0 < self.P_1 <= self.P_2):
            raise ConfigError(f"need 0 < P_1 <= P_2, got P_1={self.P_1}, P_2={self.P_2}")
        if not (0 <= self.Q_1 <= self.Q_2):
            raise ConfigError(f"need 0 <= Q_1 <= Q_2, got Q_1={self.Q_1}, Q_2={self.Q_2}")
        if not (0.0 <= self.alpha <= 1.0):
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.dmax <= 0 or self.dmax % 8:
            raise ConfigError(f"dmax must be a positive multiple of 8, got {self.dmax}")
        if self.T_s < 0 or self.T_c < 0:
            raise ConfigError("thresholds T_s and T_c must be non-negative")
        if self.r_s < 0 or self.r_c < 0:
            raise ConfigError("window radii r_s and r_c must be non-negative")
        w, h = self.census_window
        if w % 2 == 0 or h % 2 == 0 or w * h > 64:
            raise ConfigError(f"census window must be odd-sized with at most 64 cells, got {w}x{h}")

    @property
    def census_window(self):
        return (self.census_width, self.census_height)

    def updated(self, **changes) -> "FusionParams":
        return replace(self, **changes)

    @classmethod
    def names(cls):
        return [f.name for f in fields(cls)]


# --------------------------------------------------------------------------
# PNG I/O

def _imread(path):
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise InputError(f"no such file: {path}")
    img = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if img is None:
        raise InputError(f"cannot decode image: {path}")
    if img.size == 0:
        raise InputError(f"image has zero dimensions: {path}")
    return img


def luma_bt601(rgb):
    """Integer BT.601 luma of an (..., 3) uint8 RGB array, rounded half-up."""
    rgb = np.asarray(rgb, dtype=np.int64)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return y.astype(np.uint8)


def read_gray_png(path) -> GrayImage:
    """Load an 8/16-bit gray or RGB PNG as an 8-bit gray image.

    16-bit samples keep their high byte; RGB is reduced with BT.601 luma.
    """
    img = _imread(path)
    if img.dtype == np.uint16:
        img = (img >> 8).astype(np.uint8)
    elif img.dtype != np.uint8:
        raise InputError(f"unsupported sample type {img.dtype} in {path}")
    if img.ndim == 2:
        return GrayImage(img)
    if img.ndim == 3 and img.shape[2] == 3:
        return GrayImage(luma_bt601(img[..., ::-1]))
    raise InputError(f"unsupported channel layout {img.shape} in {path}")


def write_gray_png(img: GrayImage, path):
    if not cv2.imwrite(os.fspath(path), np.ascontiguousarray(img.data)):
        raise InputError(f"cannot write {path}")


def read_disparity_png(path, kind="dense", dmax=None, on_overflow="invalid"):
    """Decode a KITTI 16-bit disparity PNG.

    Args:
        path: PNG file.
        kind: ``"dense"`` keeps 1/256 resolution, ``"sparse"`` truncates to
            integer pixels.
        dmax: optional disparity range; decoded values >= dmax are handled
            per ``on_overflow``.
        on_overflow: ``"invalid"`` marks them invalid, ``"clamp"`` clamps
            them just below ``dmax``. Either way a DisparityRangeWarning is
            issued.

    Returns:
        DenseDisparityMap or SparseDisparityMap.
    """
    if kind not in ("dense", "sparse"):
        raise ValueError(f"kind must be 'dense' or 'sparse', got {kind!r}")
    if on_overflow not in ("invalid", "clamp"):
        raise ValueError(f"on_overflow must be 'invalid' or 'clamp', got {on_overflow!r}")
    raw = _imread(path)
    if raw.dtype != np.uint16 or raw.ndim != 2:
        raise InputError(f"disparity PNG must be 16-bit single channel: {path}")
    stored = raw.astype(np.int32)
    valid = stored > 0
    if kind == "sparse":
        values = stored // DISP_SCALE
        limit = None if dmax is None else dmax
        top = None if dmax is None else dmax - 1
    else:
        values = stored
        limit = None if dmax is None else dmax * DISP_SCALE
        top = None if dmax is None else dmax * DISP_SCALE - 1
    if limit is not None:
        over = valid & (values >= limit)
        if over.any():
            warnings.warn(
                f"{int(over.sum())} disparities >= dmax={dmax} in {path} ({on_overflow})",
                DisparityRangeWarning,
                stacklevel=2,
            )
            if on_overflow == "invalid":
                valid = valid & ~over
            else:
                values = np.where(over, top, values)
    cls = SparseDisparityMap if kind == "sparse" else DenseDisparityMap
    return cls(values, valid)


def encode_disparity(dmap) -> np.ndarray:
    """Convert a disparity map to the stored uint16 KITTI array.

    A valid disparity of exactly 0 cannot be told apart from "invalid" in
    this format, so it is stored as 1 (1/256 px).
    """
    if isinstance(dmap, SparseDisparityMap):
        fixed = dmap.values.astype(np.int64) * DISP_SCALE
    else:
        fixed = dmap.values.astype(np.int64)
    if np.any(fixed[dmap.valid] > MAX_STORED):
        raise InputError("disparity >= 256 px cannot be encoded in a 16-bit PNG")
    stored = np.where(dmap.valid, np.maximum(fixed, 1), 0)
    return stored.astype(np.uint16)


def write_disparity_png(dmap, path):
    """Write a dense or sparse disparity map as a KITTI 16-bit PNG."""
    stored = encode_disparity(dmap)
    if not cv2.imwrite(os.fspath(path), stored):
        raise InputError(f"cannot write {path}")
