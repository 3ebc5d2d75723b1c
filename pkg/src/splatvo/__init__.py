"""SfM-free 3D Gaussian splatting at desk scale.

Camera tracking by ICP-initialized photometric pose refinement through a
differentiable CPU splat renderer, with voxel-density-driven scene growth
and standard trajectory / image-quality metrics.
"""

from . import densify, fileio, geometry, gicp, losses, metrics, pose_opt, splat, synth
from .geometry import (
    CameraIntrinsics,
    DepthMap,
    ImageRGB,
    PointCloud,
    PoseSE3,
    Twist,
    chain_poses,
    compose,
    compute_sky_mask,
    exp_map,
    lift_depth,
    log_map,
    transform_points,
)
from .splat import Gaussian, GaussianScene, render, render_backward

__version__ = "0.1.0"
