"""
Command-line front end.

Single frame::

    sgmfusion --left L.png --right R.png --sparse S.png --gt G.png --out-dir out/

Batch (directories of equally named files) with a CSV report::

    sgmfusion --left image_2/ --right image_3/ --sparse sparse/ --gt disp_occ/ \\
        --out-dir out/ --report report.csv

Parameter sweep::

    sgmfusion ... --sweep T_c 0,1,2,4 --report sweep.csv

Exit codes: 0 ok, 2 input error, 3 config error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from ._parallel import set_threads
from .evaluation.metrics import EvalReport, evaluate, write_error_map
from .evaluation.synth import synth_scene
from .imagecore import (
    SWEEPABLE,
    ConfigError,
    FusionParams,
    InputError,
    read_disparity_png,
    read_gray_png,
    write_disparity_png,
)
from .lidar import project_to_sparse, read_kitti_calib, read_velodyne_bin
from .pipeline import VARIANTS, fuse_frame

log = logging.getLogger("sgmfusion")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(FusionParams)}


@dataclass
class RunConfig:
    params: FusionParams = field(default_factory=FusionParams)
    variant: str = "sdsgm"
    out_dir: Path | None = None
    write_error_maps: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


@dataclass
class Frame:
    """Where one frame's inputs come from. In-memory scenes set ``scene``."""

    frame_id: str
    left: Path | None = None
    right: Path | None = None
    sparse: Path | None = None
    velodyne: Path | None = None
    calib: Path | None = None
    gt: Path | None = None
    scene: object = None


@dataclass
class FrameOutputs:
    frame_id: str
    result: object
    evaluation: object = None
    written: list = field(default_factory=list)


def _convert(key, raw):
    if key == "variant":
        return raw.strip().lower()
    kind = _FIELD_TYPES.get(key)
    if kind is None:
        raise ConfigError(f"unknown parameter {key!r}")
    raw = raw.strip()
    try:
        if kind == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            value = float(raw)
            if not value.is_integer():
                raise ValueError(raw)
            return int(value)
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text):
    """Parse ``key = value`` lines (``#`` starts a comment) into a dict of typed values."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _convert(key, value)
    return out


def build_config(config_path=None, overrides=(), dmax=None, variant=None, out_dir=None) -> RunConfig:
    values = {}
    if config_path is not None:
        try:
            text = Path(config_path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from None
        values.update(parse_config_text(text))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = _convert(key.strip(), value)
    if dmax is not None:
        values["dmax"] = dmax
    if variant is not None:
        values["variant"] = variant
    run_variant = values.pop("variant", "sdsgm")
    try:
        params = FusionParams(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(params, run_variant, Path(out_dir) if out_dir else None)


def load_frame(frame: Frame, params: FusionParams):
    """Read (base, match, sparse, gt) for one frame; gt may be None."""
    if frame.scene is not None:
        sc = frame.scene
        return sc.base, sc.match, sc.lidar, sc.gt
    base = read_gray_png(frame.left)
    match = read_gray_png(frame.right)
    if base.shape != match.shape:
        raise InputError(f"{frame.frame_id}: left {base.shape} and right {match.shape} differ")
    sparse = None
    if frame.sparse is not None:
        sparse = read_disparity_png(frame.sparse, kind="sparse", dmax=params.dmax)
    elif frame.velodyne is not None:
        if frame.calib is None:
            raise InputError("--velodyne needs --calib")
        cloud = read_velodyne_bin(frame.velodyne)
        calib = read_kitti_calib(frame.calib)
        sparse = project_to_sparse(cloud, calib, (base.width, base.height), params.dmax)
    if sparse is not None and sparse.shape != base.shape:
        raise InputError(f"{frame.frame_id}: sparse map {sparse.shape} does not match images {base.shape}")
    gt = read_disparity_png(frame.gt, kind="dense") if frame.gt is not None else None
    if gt is not None and gt.shape != base.shape:
        raise InputError(f"{frame.frame_id}: ground truth {gt.shape} does not match images {base.shape}")
    return base, match, sparse, gt


def run_frame(config: RunConfig, frame: Frame, out=None) -> FrameOutputs:
    """Fuse one frame, write its outputs and print per-stage wall time to ``out`` (if given)."""
    base, match, sparse, gt = load_frame(frame, config.params)
    sparse_in = None if config.variant == "sgm" else sparse
    if sparse_in is None and config.variant != "sgm":
        raise InputError(f"{frame.frame_id}: variant {config.variant} needs --sparse or --velodyne")
    result = fuse_frame(base, match, sparse_in, config.params, config.variant)
    outputs = FrameOutputs(frame.frame_id, result)
    if gt is not None:
        outputs.evaluation = evaluate(result.disparity, gt, frame.frame_id, config.params.relative_error)
    if config.out_dir is not None:
        config.out_dir.mkdir(parents=True, exist_ok=True)
        dst = config.out_dir / f"{frame.frame_id}.png"
        write_disparity_png(result.disparity, dst)
        outputs.written.append(dst)
        if gt is not None and config.write_error_maps:
            err = config.out_dir / f"{frame.frame_id}_error.png"
            write_error_map(result.disparity, gt, err)
            outputs.written.append(err)
    if out is not None:
        stages = " ".join(f"{k}={v * 1000:.1f}ms" for k, v in result.timings.items())
        line = f"{frame.frame_id} [{config.variant}] {stages} total={result.total_time * 1000:.1f}ms"
        if outputs.evaluation is not None:
            e = outputs.evaluation
            line += (f" coverage={e.coverage_pct:.2f}% covered_err={e.covered_error_pct:.2f}%"
                     f" total_err={e.total_error_pct:.2f}%")
        print(line, file=out)
    return outputs


def run_batch(config: RunConfig, frames, out=None) -> EvalReport:
    report = EvalReport()
    for frame in frames:
        outputs = run_frame(config, frame, out)
        if outputs.evaluation is not None:
            report.add(outputs.evaluation)
    return report


def run_sweep(config: RunConfig, frames, parameter, values, out=None):
    """Evaluate every value of one parameter; totals are relative to the default-parameter run.

    Returns:
        list of (value, EvalReport, relative_total_error).
    """
    if parameter not in SWEEPABLE:
        raise ConfigError(f"cannot sweep {parameter!r}; choose from {SWEEPABLE}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    frames = list(frames)
    baseline_value = getattr(FusionParams(), parameter)
    quiet = dataclasses.replace(config, out_dir=None)

    def score(value):
        try:
            params = config.params.updated(**{parameter: value})
        except ConfigError as exc:
            raise ConfigError(f"{parameter}={value}: {exc}") from None
        report = run_batch(dataclasses.replace(quiet, params=params), frames, out=None)
        if report.frame_count == 0:
            raise InputError("sweeps need ground truth (--gt)")
        return report

    base_report = score(baseline_value)
    rows = []
    for value in values:
        report = base_report if value == baseline_value else score(value)
        base_err = base_report.total_error
        rel = report.total_error / base_err if base_err else (1.0 if report.total_error == 0 else float("inf"))
        rows.append((value, report, rel))
        if out is not None:
            print(f"{parameter}={value} coverage={report.coverage:.2f}% total_err={report.total_error:.3f}% "
                  f"relative={rel:.4f}", file=out)
    return rows


def write_sweep_csv(path, parameter, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(("parameter", "value", "coverage_pct", "covered_error_pct", "total_error_pct",
                    "relative_total_error"))
        for value, report, rel in rows:
            w.writerow((parameter, value, f"{report.coverage:.4f}", f"{report.covered_error:.4f}",
                        f"{report.total_error:.4f}", f"{rel:.6f}"))


def _match_dir(directory, stem, suffixes):
    for suffix in suffixes:
        p = directory / f"{stem}{suffix}"
        if p.is_file():
            return p
    raise InputError(f"no file for frame {stem} in {directory}")


def discover_frames(args):
    """Single frame when --left is a file, otherwise one frame per PNG in the --left directory."""
    if args.synthetic:
        return [
            Frame(f"synth{args.seed + i:04d}",
                  scene=synth_scene(args.seed + i, dmax=args.dmax or 64, textureless=0.25, misprojection=0.05))
            for i in range(args.synthetic)
        ]
    if args.left is None or args.right is None:
        raise InputError("--left and --right are required (or use --synthetic N)")
    left = Path(args.left)
    right = Path(args.right)
    if left.is_file():
        return [Frame(left.stem, left, right, _opt(args.sparse), _opt(args.velodyne), _opt(args.calib), _opt(args.gt))]
    if not left.is_dir():
        raise InputError(f"no such file or directory: {left}")
    frames = []
    for lp in sorted(left.glob("*.png")):
        stem = lp.stem
        frame = Frame(stem, lp, _match_dir(right, stem, (".png",)))
        if args.sparse:
            frame.sparse = _match_dir(Path(args.sparse), stem, (".png",))
        if args.velodyne:
            frame.velodyne = _match_dir(Path(args.velodyne), stem, (".bin",))
            calib = Path(args.calib) if args.calib else None
            frame.calib = _match_dir(calib, stem, (".txt",)) if calib and calib.is_dir() else calib
        if args.gt:
            frame.gt = _match_dir(Path(args.gt), stem, (".png",))
        frames.append(frame)
    if not frames:
        raise InputError(f"no PNG frames in {left}")
    return frames


def _opt(p):
    return Path(p) if p else None


def build_parser():
    ap = argparse.ArgumentParser(prog="sgmfusion", description="Stereo-LiDAR disparity fusion.")
    ap.add_argument("--left", help="base (left) image, or a directory of them")
    ap.add_argument("--right", help="matching (right) image, or a directory")
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--sparse", help="16-bit sparse LiDAR disparity PNG (or directory)")
    src.add_argument("--velodyne", help="Velodyne .bin scan (or directory); needs --calib")
    ap.add_argument("--calib", help="KITTI calibration file (or directory of <frame>.txt)")
    ap.add_argument("--variant", choices=VARIANTS, help="pipeline variant (default sdsgm)")
    ap.add_argument("--gt", help="ground-truth disparity PNG (or directory) for evaluation")
    ap.add_argument("--out-dir", help="write disparity PNGs (and error maps) here")
    ap.add_argument("--config", help="key = value parameter file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one parameter")
    ap.add_argument("--dmax", type=int, help="disparity range (multiple of 8)")
    ap.add_argument("--sweep", nargs=2, metavar=("PARAM", "V1,V2,..."), help="sweep one parameter")
    ap.add_argument("--report", help="CSV report path")
    ap.add_argument("--synthetic", type=int, default=0, metavar="N", help="use N synthetic frames as input")
    ap.add_argument("--seed", type=int, default=0, help="first seed for --synthetic")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    set_threads()
    try:
        dmax = args.dmax if args.dmax or not args.synthetic else 64
        config = build_config(args.config, args.set, dmax, args.variant, args.out_dir)
        sweep = None
        if args.sweep:
            name, raw = args.sweep
            values = [_convert(name, v) for v in raw.split(",") if v.strip()] if name in _FIELD_TYPES else None
            if values is None:
                raise ConfigError(f"cannot sweep {name!r}; choose from {SWEEPABLE}")
            sweep = (name, values)
        frames = discover_frames(args)
        t0 = time.perf_counter()
        if sweep is not None:
            rows = run_sweep(config, frames, *sweep, out=sys.stdout)
            if args.report:
                write_sweep_csv(args.report, sweep[0], rows)
        else:
            report = run_batch(config, frames, out=sys.stdout)
            if report.frame_count:
                pooled = report.pooled
                print(f"pooled over {report.frame_count} frame(s): coverage={pooled.coverage_pct:.2f}% "
                      f"covered_err={pooled.covered_error_pct:.2f}% total_err={pooled.total_error_pct:.2f}%")
                if args.report:
                    report.write_csv(args.report)
            elif args.report:
                raise InputError("--report needs ground truth (--gt)")
        log.info("done in %.2fs", time.perf_counter() - t0)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
