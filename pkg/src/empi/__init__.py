"""Expanded multiplane images: fit a layered scene from one posed RGB-D view,
render novel views, and export web-ready bundles."""

from .camera import (
    CameraModel,
    ExpansionSpec,
    Pose,
    PoseRanges,
    expanded_fov,
    expansion_factor,
    plane_homography,
    sample_poses,
)
from .metrics import masked_psnr, masked_ssim, psnr, ssim
from .mpi import (
    BilateralKernel,
    MpiVolume,
    bilateral_filter,
    composite,
    init_mpi,
    render_view,
)
from .optim import OptimizeConfig, gradcheck, optimize
from .pseudo import PseudoBundle, PseudoView, build_pseudo_views
from .warp import DepthRaster, lift_to_points, painter_render, warp_points

__version__ = "0.1.0"

__all__ = [
    "BilateralKernel",
    "CameraModel",
    "DepthRaster",
    "ExpansionSpec",
    "MpiVolume",
    "OptimizeConfig",
    "Pose",
    "PoseRanges",
    "PseudoBundle",
    "PseudoView",
    "bilateral_filter",
    "build_pseudo_views",
    "composite",
    "expanded_fov",
    "expansion_factor",
    "gradcheck",
    "init_mpi",
    "lift_to_points",
    "masked_psnr",
    "masked_ssim",
    "optimize",
    "painter_render",
    "plane_homography",
    "psnr",
    "render_view",
    "sample_poses",
    "ssim",
    "warp_points",
]
