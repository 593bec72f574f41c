"""
LiDAR point clouds to sparse disparity maps aligned with the base camera.

File formats follow KITTI: Velodyne scans are little-endian float32
quadruples (x, y, z, reflectance) and calibration files are ``key: values``
lines with keys P2, P3, R0_rect and Tr_velo_to_cam.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .imagecore import InputError, SparseDisparityMap

#: nominal vertical field of view of a Velodyne HDL-64E, degrees
HDL64_FOV = (-24.9, 2.0)
HDL64_LINES = 64


@dataclass(frozen=True, eq=False)
class PointCloud:
    """(N, 4) float32 array of x, y, z, reflectance in the sensor frame (metres)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32)
        if pts.size == 0:
            pts = pts.reshape(0, 4)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise InputError(f"point cloud must be (N, 4), got {pts.shape}")
        if not np.all(np.isfinite(pts[:, :3])):
            raise InputError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def xyz(self):
        return self.points[:, :3]


def read_velodyne_bin(path) -> PointCloud:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise InputError(f"no such file: {path}")
    raw = np.fromfile(path, dtype="<f4")
    if raw.size % 4:
        raise InputError(f"{path}: size is not a multiple of 16 bytes")
    return PointCloud(raw.reshape(-1, 4))


def write_velodyne_bin(cloud: PointCloud, path):
    cloud.points.astype("<f4").tofile(os.fspath(path))


@dataclass(frozen=True, eq=False)
class CalibrationSet:
    """Base-camera projection, rectifying rotation and LiDAR-to-camera transform.

    Attributes:
        projection: 3x4 projection matrix of the base camera (pixels).
        rectify: 3x3 rectifying rotation.
        lidar_to_camera: 3x4 rigid transform [R | t] (metres).
        focal_baseline: fB, focal length times stereo baseline (pixel metres).
    """

    projection: np.ndarray
    rectify: np.ndarray
    lidar_to_camera: np.ndarray
    focal_baseline: float

    def __post_init__(self):
        P = np.asarray(self.projection, np.float64)
        R = np.asarray(self.rectify, np.float64)
        T = np.asarray(self.lidar_to_camera, np.float64)
        if P.shape != (3, 4) or R.shape != (3, 3) or T.shape != (3, 4):
            raise InputError("calibration matrices must be 3x4, 3x3 and 3x4")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-6, rtol=0) or np.linalg.det(R) <= 0:
            raise InputError("rectifying rotation is not orthonormal")
        if abs(np.linalg.det(T[:, :3])) < 1e-6:
            raise InputError("LiDAR-to-camera rotation is singular")
        if not self.focal_baseline > 0:
            raise InputError(f"focal_baseline must be positive, got {self.focal_baseline}")
        object.__setattr__(self, "projection", P)
        object.__setattr__(self, "rectify", R)
        object.__setattr__(self, "lidar_to_camera", T)
        object.__setattr__(self, "focal_baseline", float(self.focal_baseline))


def parse_kitti_calib(text, base="P2", match="P3") -> CalibrationSet:
    """Parse a KITTI object-style calibration file.

    The stereo fB product is ``P_base[0, 3] - P_match[0, 3]`` (both rows carry
    -f * t_x of their camera).
    """
    entries = {}
    for line in text.splitlines():
        if ":" not in line:
            continue
        key, value = line.split(":", 1)
        try:
            entries[key.strip()] = np.array([float(v) for v in value.split()])
        except ValueError:
            continue
    for key in (base, match, "R0_rect", "Tr_velo_to_cam"):
        if key not in entries:
            raise InputError(f"calibration is missing {key}")
    try:
        P = entries[base].reshape(3, 4)
        Pm = entries[match].reshape(3, 4)
        R = entries["R0_rect"].reshape(3, 3)
        T = entries["Tr_velo_to_cam"].reshape(3, 4)
    except ValueError as exc:
        raise InputError(f"malformed calibration matrix: {exc}") from None
    return CalibrationSet(P, R, T, P[0, 3] - Pm[0, 3])


def read_kitti_calib(path, base="P2", match="P3") -> CalibrationSet:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise InputError(f"no such file: {path}")
    with open(path, encoding="utf-8") as f:
        return parse_kitti_calib(f.read(), base, match)


def project_points(cloud: PointCloud, calib: CalibrationSet):
    """Project into the base image.

    Returns:
        (u, v, z) float64 arrays: continuous pixel column/row and depth along
        the rectified optical axis.
    """
    n = len(cloud)
    homo = np.ones((n, 4))
    homo[:, :3] = cloud.xyz
    cam = (calib.lidar_to_camera @ homo.T).T
    rect = (calib.rectify @ cam.T).T
    rect_h = np.ones((n, 4))
    rect_h[:, :3] = rect
    uvw = (calib.projection @ rect_h.T).T
    z = uvw[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = uvw[:, 0] / z
        v = uvw[:, 1] / z
    return u, v, z


def project_to_sparse(cloud: PointCloud, calib: CalibrationSet, dims, dmax) -> SparseDisparityMap:
    """Rasterise a point cloud into a sparse integer disparity map.

    Points behind the camera are dropped; pixels and disparities
    (fB / z) are rounded half-up; anything outside the image or outside
    [0, dmax) is dropped. When several points hit one pixel the nearest
    wins, then the lowest point index.

    Args:
        dims: (width, height) of the base image.
    """
    width, height = dims
    u, v, z = project_points(cloud, calib)
    idx = np.arange(len(cloud))
    front = z > 0
    u, v, z, idx = u[front], v[front], z[front], idx[front]
    col = np.floor(u + 0.5)
    row = np.floor(v + 0.5)
    disp = np.floor(calib.focal_baseline / z + 0.5)
    ok = (col >= 0) & (col < width) & (row >= 0) & (row < height) & (disp >= 0) & (disp < dmax)
    col, row, disp, z, idx = col[ok].astype(np.int64), row[ok].astype(np.int64), disp[ok].astype(np.int64), z[ok], idx[ok]
    pix = row * width + col
    order = np.lexsort((idx, z, pix))
    pix, disp = pix[order], disp[order]
    first = np.ones(pix.shape, bool)
    first[1:] = pix[1:] != pix[:-1]
    values = np.zeros(width * height, np.int32)
    valid = np.zeros(width * height, bool)
    values[pix[first]] = disp[first]
    valid[pix[first]] = True
    return SparseDisparityMap(values.reshape(height, width), valid.reshape(height, width))


def scanline_bins(cloud: PointCloud, fov=HDL64_FOV, lines=HDL64_LINES):
    """Elevation-angle bin of every point; uniform bins over ``fov``, edges clipped in."""
    x, y, z = cloud.xyz.astype(np.float64).T
    elev = np.degrees(np.arctan2(z, np.hypot(x, y)))
    lo, hi = fov
    bins = np.floor((elev - lo) / (hi - lo) * lines).astype(np.int64)
    return np.clip(bins, 0, lines - 1)


def subsample_scanlines(cloud: PointCloud, keep: int, fov=HDL64_FOV, lines=HDL64_LINES) -> PointCloud:
    """Keep every ``keep``-th elevation bin, starting with the lowest (bin 0)."""
    if keep not in (1, 2, 4):
        raise ValueError(f"keep must be 1, 2 or 4, got {keep}")
    if len(cloud) == 0 or keep == 1:
        return PointCloud(cloud.points.copy())
    bins = scanline_bins(cloud, fov, lines)
    return PointCloud(cloud.points[bins % keep == 0])
