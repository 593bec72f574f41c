import struct

import numpy as np
import pytest

from sgmfusion.imagecore import InputError
from sgmfusion.lidar import (
    HDL64_FOV,
    CalibrationSet,
    PointCloud,
    parse_kitti_calib,
    project_to_sparse,
    read_kitti_calib,
    read_velodyne_bin,
    scanline_bins,
    subsample_scanlines,
    write_velodyne_bin,
)

F, CX, CY, BASELINE = 700.0, 60.0, 40.0, 0.5
FB = F * BASELINE
# KITTI axes: velodyne x forward, y left, z up; camera x right, y down, z forward
VELO_TO_CAM = np.array([[0.0, -1, 0, 0], [0, 0, -1, 0], [1, 0, 0, 0]])
DIMS = (120, 80)


def _calib():
    P = np.array([[F, 0, CX, 0], [0, F, CY, 0], [0, 0, 1, 0]])
    return CalibrationSet(P, np.eye(3), VELO_TO_CAM, FB)


def _cam_to_velo(xyz_cam):
    x, y, z = xyz_cam.T
    return np.stack([z, -x, -y], axis=1)


def _cloud(xyz_velo):
    xyz_velo = np.asarray(xyz_velo, np.float64)
    pts = np.zeros((len(xyz_velo), 4), np.float32)
    pts[:, :3] = xyz_velo
    return PointCloud(pts)


CALIB_TEXT = """P0: 700 0 60 0 0 700 40 0 0 0 1 0
P1: 700 0 60 -350 0 700 40 0 0 0 1 0
P2: 700 0 60 10 0 700 40 0 0 0 1 0
P3: 700 0 60 -340 0 700 40 0 0 0 1 0
R0_rect: 1 0 0 0 1 0 0 0 1
Tr_velo_to_cam: 0 -1 0 0 0 0 -1 0 1 0 0 0
Tr_imu_to_velo: 1 0 0 0 0 1 0 0 0 0 1 0
"""


def test_on_axis_point():
    sp = project_to_sparse(_cloud([[FB / 10, 0, 0]]), _calib(), DIMS, 128)
    assert sp.valid.sum() == 1
    assert sp.valid[int(CY), int(CX)]
    assert sp.values[int(CY), int(CX)] == 10


def test_zbuffer_keeps_nearest():
    far_first = _cloud([[50.0, 0, 0], [5.0, 0, 0]])
    sp = project_to_sparse(far_first, _calib(), DIMS, 128)
    assert sp.values[int(CY), int(CX)] == 70
    near_first = _cloud([[5.0, 0, 0], [50.0, 0, 0]])
    assert project_to_sparse(near_first, _calib(), DIMS, 128) == sp


def test_drops_behind_outside_and_out_of_range():
    pts = [
        [-5.0, 0, 0],       # behind the camera
        [5.0, 5.0, 0],      # off the left edge
        [FB / 200, 0, 0],   # disparity 200 >= dmax
        [FB / 20, 0, 0],    # kept
    ]
    sp = project_to_sparse(_cloud(pts), _calib(), DIMS, 128)
    assert sp.valid.sum() == 1 and sp.values[int(CY), int(CX)] == 20


def test_plane_oracle(rng):
    # plane n . X = rho in camera coordinates, sampled at pixel centres
    n = np.array([0.05, -0.3, 1.0])
    rho = 12.0
    u = rng.integers(0, DIMS[0], 300).astype(float)
    v = rng.integers(0, DIMS[1], 300).astype(float)
    ray = np.stack([(u - CX) / F, (v - CY) / F, np.ones_like(u)], axis=1)
    z = rho / (ray @ n)
    cam = ray * z[:, None]
    sp = project_to_sparse(_cloud(_cam_to_velo(cam)), _calib(), DIMS, 128)
    cols, rows = u.astype(int), v.astype(int)
    assert sp.valid[rows, cols].all()
    plane_disp = FB * (ray @ n) / rho
    assert np.all(np.abs(sp.values[rows, cols] - plane_disp) <= 0.5 + 1e-4)


def test_projection_oracle_and_unprojection(rng):
    cam = np.stack([rng.uniform(-3, 3, 400), rng.uniform(-1, 1, 400), rng.uniform(3, 60, 400)], axis=1)
    cloud = _cloud(_cam_to_velo(cam))
    sp = project_to_sparse(cloud, _calib(), DIMS, 128)
    # camera coordinates of the stored float32 points
    xc, yc, zc = -cloud.xyz[:, 1].astype(float), -cloud.xyz[:, 2].astype(float), cloud.xyz[:, 0].astype(float)
    u = np.floor(F * xc / zc + CX + 0.5).astype(int)
    v = np.floor(F * yc / zc + CY + 0.5).astype(int)
    d = np.floor(FB / zc + 0.5).astype(int)
    nearest = {}
    for i in range(len(zc)):
        if 0 <= u[i] < DIMS[0] and 0 <= v[i] < DIMS[1] and d[i] < 128:
            key = (v[i], u[i])
            if key not in nearest or zc[i] < zc[nearest[key]]:
                nearest[key] = i
    want = np.zeros(sp.shape, bool)
    for (y, x), i in nearest.items():
        want[y, x] = True
        assert sp.values[y, x] == d[i]
        # disparity reproduces the depth within quantisation
        assert FB / (sp.values[y, x] + 0.5) <= zc[i] <= FB / (sp.values[y, x] - 0.5)
    assert np.array_equal(sp.valid, want)


def test_velodyne_fixture(tmp_path):
    vals = [1.5, -2.25, 0.1, 0.75, 10.0, 0.0, -1.75, 0.5, -0.003, 7.25, 3.0e2, 1.0]
    p = tmp_path / "scan.bin"
    p.write_bytes(struct.pack("<12f", *vals))
    cloud = read_velodyne_bin(p)
    assert cloud.points.dtype == np.float32 and cloud.points.shape == (3, 4)
    assert cloud.points.ravel().tolist() == [float(np.float32(v)) for v in vals]
    write_velodyne_bin(cloud, tmp_path / "copy.bin")
    assert (tmp_path / "copy.bin").read_bytes() == p.read_bytes()


def test_velodyne_errors(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(struct.pack("<5f", *range(5)))
    with pytest.raises(InputError):
        read_velodyne_bin(p)
    with pytest.raises(InputError):
        read_velodyne_bin(tmp_path / "none.bin")
    with pytest.raises(InputError):
        PointCloud(np.array([[np.nan, 0, 0, 0]]))


def test_calib_parsing(tmp_path):
    calib = parse_kitti_calib(CALIB_TEXT)
    assert calib.focal_baseline == 350.0
    assert calib.projection[0, 3] == 10
    assert np.array_equal(calib.lidar_to_camera, VELO_TO_CAM)
    (tmp_path / "c.txt").write_text(CALIB_TEXT)
    assert read_kitti_calib(tmp_path / "c.txt").focal_baseline == 350.0


def test_calib_errors():
    with pytest.raises(InputError):
        parse_kitti_calib(CALIB_TEXT.replace("R0_rect", "R9"))
    with pytest.raises(InputError):
        parse_kitti_calib(CALIB_TEXT.replace("R0_rect: 1 0 0 0 1 0 0 0 1", "R0_rect: 1 0 0 0 2 0 0 0 1"))
    with pytest.raises(InputError):
        parse_kitti_calib(CALIB_TEXT.replace("Tr_velo_to_cam: 0 -1 0 0 0 0 -1 0 1 0 0 0", "Tr_velo_to_cam: 0 0 0 0 0 0 0 0 0 0 0 0"))
    with pytest.raises(InputError):
        parse_kitti_calib(CALIB_TEXT.replace("P3: 700 0 60 -340", "P3: 700 0 60 20"))
    with pytest.raises(InputError):
        parse_kitti_calib(CALIB_TEXT.replace("R0_rect: 1 0 0 0 1 0 0 0 1", "R0_rect: 1 0 0 0 1 0"))


def _all_bins_cloud(per_bin=3):
    lo, hi = HDL64_FOV
    step = (hi - lo) / 64
    pts = []
    for i in range(64):
        for k in range(per_bin):
            elev = np.radians(lo + (i + 0.5) * step)
            az = np.radians(-30 + 20 * k)
            r = 10.0 + k
            pts.append([r * np.cos(elev) * np.cos(az), r * np.cos(elev) * np.sin(az), r * np.sin(elev)])
    return _cloud(pts)


def test_scanline_bins_cover_all():
    bins = scanline_bins(_all_bins_cloud())
    assert sorted(set(bins.tolist())) == list(range(64))


@pytest.mark.parametrize("keep,count", [(1, 64), (2, 32), (4, 16)])
def test_subsample_cardinality(keep, count):
    cloud = _all_bins_cloud()
    sub = subsample_scanlines(cloud, keep)
    bins = set(scanline_bins(sub).tolist())
    assert len(bins) == count
    assert min(bins) == 0
    assert all(b % keep == 0 for b in bins)
    if keep == 1:
        assert np.array_equal(sub.points, cloud.points)


def test_subsample_edge_cases():
    assert len(subsample_scanlines(PointCloud(np.zeros((0, 4))), 2)) == 0
    with pytest.raises(ValueError):
        subsample_scanlines(_all_bins_cloud(), 3)


def test_subsampled_projection_is_subset(rng):
    n = 3000
    elev = rng.uniform(-24.9, 2.0, n)
    az = rng.uniform(-35, 35, n)
    r = rng.uniform(4, 60, n)
    e, a = np.radians(elev), np.radians(az)
    cloud = _cloud(np.stack([r * np.cos(e) * np.cos(a), r * np.cos(e) * np.sin(a), r * np.sin(e)], axis=1))
    full = project_to_sparse(cloud, _calib(), DIMS, 128)
    for keep in (2, 4):
        sub = project_to_sparse(subsample_scanlines(cloud, keep), _calib(), DIMS, 128)
        assert np.all(full.valid[sub.valid])
        # fewer points can only leave a farther (or the same) winner
        assert np.all(sub.values[sub.valid] <= full.values[sub.valid])
