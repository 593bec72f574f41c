"""Stereo-LiDAR disparity fusion with semi-global matching.

The pipeline blends census stereo costs with a discrete disparity-matching
cost against a sparse LiDAR prior, optionally semidensifies that prior
first, and filters the result with a stereo-LiDAR consistency check.
"""

from .consistency import consistency_check
from .cost import COST_CAP, COST_SCALE, CensusImage, CostVolume, census_transform, ddc_fuse, stereo_cost
from .imagecore import (
    DISP_SCALE,
    ConfigError,
    DenseDisparityMap,
    FusionError,
    FusionParams,
    GrayImage,
    InputError,
    SparseDisparityMap,
    read_disparity_png,
    read_gray_png,
    write_disparity_png,
)
from .lidar import CalibrationSet, PointCloud, project_to_sparse, read_kitti_calib, read_velodyne_bin, subsample_scanlines
from .pipeline import VARIANTS, FrameResult, fuse_frame
from .semidense import semidensify
from .sgm import ALL_PATHS, AggregatedVolume, aggregate, select_winner, winner_from_match_view

__version__ = "0.1.0"
