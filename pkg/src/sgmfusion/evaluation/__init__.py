"""Metrics and synthetic scenes for dataset-free evaluation."""

from .metrics import (
    BAD_PIXEL_THRESHOLD,
    CSV_COLUMNS,
    EvalReport,
    FrameEval,
    InterpolationWarning,
    background_interpolate,
    bad_pixels,
    error_map,
    evaluate,
    evaluate_sparse,
    write_error_map,
)
from .synth import SynthScene, synth_scene, thin_scanlines
