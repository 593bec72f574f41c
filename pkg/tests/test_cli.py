import csv

import numpy as np
import pytest

from sgmfusion import cli
from sgmfusion.evaluation import synth_scene
from sgmfusion.imagecore import ConfigError, FusionParams, read_disparity_png, write_disparity_png, write_gray_png
from sgmfusion.lidar import PointCloud, parse_kitti_calib, project_to_sparse, write_velodyne_bin

DIMS, DMAX = (96, 64), 32
F, CX, CY, FB = 500.0, 48.0, 32.0, 250.0
CALIB = f"""P2: {F} 0 {CX} 0 0 {F} {CY} 0 0 0 1 0
P3: {F} 0 {CX} {-FB} 0 {F} {CY} 0 0 0 1 0
R0_rect: 1 0 0 0 1 0 0 0 1
Tr_velo_to_cam: 0 -1 0 0 0 0 -1 0 1 0 0 0
"""


def _write_frame(root, stem, seed):
    sc = synth_scene(seed, dims=DIMS, dmax=DMAX, misprojection=0.05)
    for sub in ("left", "right", "sparse", "gt"):
        (root / sub).mkdir(exist_ok=True)
    write_gray_png(sc.base, root / "left" / f"{stem}.png")
    write_gray_png(sc.match, root / "right" / f"{stem}.png")
    write_disparity_png(sc.lidar, root / "sparse" / f"{stem}.png")
    write_disparity_png(sc.gt, root / "gt" / f"{stem}.png")
    return sc


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("frames")
    scenes = [_write_frame(root, f"{i:06d}", i) for i in range(3)]
    return root, scenes


def _frame_args(root, stem="000000", source="sparse"):
    args = ["--left", str(root / "left" / f"{stem}.png"), "--right", str(root / "right" / f"{stem}.png")]
    if source == "sparse":
        args += ["--sparse", str(root / "sparse" / f"{stem}.png")]
    return args + ["--gt", str(root / "gt" / f"{stem}.png"), "--dmax", str(DMAX)]


def test_config_parsing():
    vals = cli.parse_config_text("# table\nT_s = 3\nalpha=0.5  # blend\n\nr_c = 10\nvariant = DSGM\nrelative_error = yes\n")
    assert vals == {"T_s": 3, "alpha": 0.5, "r_c": 10, "variant": "dsgm", "relative_error": True}
    with pytest.raises(ConfigError):
        cli.parse_config_text("T_s 3")
    with pytest.raises(ConfigError):
        cli.parse_config_text("bogus = 1")
    with pytest.raises(ConfigError):
        cli.parse_config_text("r_s = 1.5")


def test_build_config_layers(tmp_path):
    cfg = tmp_path / "p.cfg"
    cfg.write_text("T_c = 4\nQ_2 = 100\n")
    c = cli.build_config(cfg, ["T_c=3"], dmax=64, variant="sgm")
    assert (c.params.T_c, c.params.Q_2, c.params.dmax, c.variant) == (3, 100, 64, "sgm")
    assert cli.build_config().params == FusionParams()
    assert cli.build_config().variant == "sdsgm"
    with pytest.raises(ConfigError):
        cli.build_config(overrides=["P_1=500"])
    with pytest.raises(ConfigError):
        cli.build_config(tmp_path / "none.cfg")


def test_single_frame(dataset, tmp_path, capsys):
    root, _ = dataset
    rc = cli.main(_frame_args(root) + ["--out-dir", str(tmp_path)])
    assert rc == cli.EXIT_OK
    assert (tmp_path / "000000.png").is_file() and (tmp_path / "000000_error.png").is_file()
    out = capsys.readouterr().out
    for stage in ("census", "semidensify", "cost", "aggregate", "winner", "consistency", "total"):
        assert f"{stage}=" in out
    d = read_disparity_png(tmp_path / "000000.png")
    assert d.shape == (DIMS[1], DIMS[0])


def test_batch_report(dataset, tmp_path):
    root, _ = dataset
    report = tmp_path / "r.csv"
    args = ["--left", str(root / "left"), "--right", str(root / "right"), "--sparse", str(root / "sparse"),
            "--gt", str(root / "gt"), "--dmax", str(DMAX), "--report", str(report)]
    assert cli.main(args) == cli.EXIT_OK
    with open(report, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["frame_id", "coverage_pct", "covered_error_pct", "total_error_pct"]
    assert [r[0] for r in rows[1:]] == ["000000", "000001", "000002", "pooled"]


def test_reruns_bit_identical(dataset, tmp_path):
    root, _ = dataset
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(_frame_args(root) + ["--out-dir", str(a)]) == 0
    assert cli.main(_frame_args(root) + ["--out-dir", str(b)]) == 0
    assert (a / "000000.png").read_bytes() == (b / "000000.png").read_bytes()


def test_sgm_variant_ignores_lidar(dataset, tmp_path):
    root, _ = dataset
    with_lidar, without = tmp_path / "w", tmp_path / "wo"
    assert cli.main(_frame_args(root) + ["--variant", "sgm", "--out-dir", str(with_lidar)]) == 0
    assert cli.main(_frame_args(root, source=None) + ["--variant", "sgm", "--out-dir", str(without)]) == 0
    assert (with_lidar / "000000.png").read_bytes() == (without / "000000.png").read_bytes()


def test_sweep(dataset, tmp_path):
    root, _ = dataset
    out = tmp_path / "s.csv"
    assert cli.main(_frame_args(root) + ["--sweep", "T_c", "2", "--report", str(out)]) == 0
    with open(out, newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 1 and float(rows[0]["relative_total_error"]) == 1.0

    assert cli.main(_frame_args(root) + ["--sweep", "T_c", "0,1,2,4", "--report", str(out)]) == 0
    with open(out, newline="") as f:
        rows = list(csv.DictReader(f))
    assert [float(r["value"]) for r in rows] == [0, 1, 2, 4]
    cov = [float(r["coverage_pct"]) for r in rows]
    assert cov == sorted(cov)


def test_sweep_api_relative_to_defaults(dataset):
    root, scenes = dataset
    frames = [cli.Frame("s", scene=scenes[0])]
    config = cli.build_config(dmax=DMAX)
    rows = cli.run_sweep(config, frames, "alpha", [0.7, 0.0], out=None)
    assert rows[0][2] == 1.0
    with pytest.raises(ConfigError):
        cli.run_sweep(config, frames, "P_1", [1], out=None)
    with pytest.raises(ConfigError):
        cli.run_sweep(config, frames, "alpha", [], out=None)


def test_velodyne_input(dataset, tmp_path):
    root, scenes = dataset
    sc = scenes[0]
    ys, xs = np.nonzero(sc.lidar.valid & (sc.lidar.values > 0))
    z = FB / sc.lidar.values[ys, xs]
    cam = np.stack([(xs - CX) / F * z, (ys - CY) / F * z, z], axis=1)
    pts = np.zeros((len(z), 4), np.float32)
    pts[:, :3] = np.stack([cam[:, 2], -cam[:, 0], -cam[:, 1]], axis=1)
    write_velodyne_bin(PointCloud(pts), tmp_path / "000000.bin")
    (tmp_path / "calib.txt").write_text(CALIB)
    projected = project_to_sparse(PointCloud(pts), parse_kitti_calib(CALIB), DIMS, DMAX)
    assert np.array_equal(projected.values[ys, xs], sc.lidar.values[ys, xs])
    args = _frame_args(root, source=None) + ["--velodyne", str(tmp_path / "000000.bin"),
                                             "--calib", str(tmp_path / "calib.txt"), "--out-dir", str(tmp_path)]
    assert cli.main(args) == cli.EXIT_OK
    no_calib = _frame_args(root, source=None) + ["--velodyne", str(tmp_path / "000000.bin")]
    assert cli.main(no_calib) == cli.EXIT_INPUT


def test_synthetic_mode(tmp_path):
    report = tmp_path / "r.csv"
    assert cli.main(["--synthetic", "2", "--report", str(report)]) == cli.EXIT_OK
    assert len(report.read_text().strip().splitlines()) == 4


def test_exit_codes(dataset, tmp_path):
    root, _ = dataset
    assert cli.main(["--left", str(tmp_path / "no.png"), "--right", str(tmp_path / "no.png")]) == cli.EXIT_INPUT
    assert cli.main(["--synthetic", "1", "--set", "alpha=2"]) == cli.EXIT_CONFIG
    assert cli.main(["--synthetic", "1", "--sweep", "dmax", "8,16"]) == cli.EXIT_CONFIG
    assert cli.main(_frame_args(root) + ["--dmax", "30"]) == cli.EXIT_CONFIG
    assert cli.main(_frame_args(root, source=None) + ["--variant", "dsgm"]) == cli.EXIT_INPUT
    bad = tmp_path / "bad.cfg"
    bad.write_text("dmax = lots\n")
    assert cli.main(_frame_args(root) + ["--config", str(bad)]) == cli.EXIT_CONFIG
    # size mismatch between stereo pair and sparse map
    other = tmp_path / "other.png"
    write_disparity_png(synth_scene(0, dims=(80, 64), dmax=DMAX).lidar, other)
    args = _frame_args(root, source=None) + ["--sparse", str(other)]
    assert cli.main(args) == cli.EXIT_INPUT
