"""Procedural test scenes.

Two generators used by the demo scripts and the end-to-end oracles:

demo_scene        a single RGB-D view with smooth depth relief, the input
                  for pipeline smoke runs.
GroundTruth       a synthetic plane stack where every texel column holds
                  exactly one opaque texel, so each pixel has one exact
                  depth and color.  Rendering it at any pose gives perfect
                  reference images, and its central crop is a source view
                  whose depth map is exact by construction.

Both are deterministic functions of their arguments; no RNG is involved so
scene content never depends on library versions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import CameraModel, ExpansionSpec
from .mpi import SIGMA_OPAQUE_SCALE, MpiVolume
from .warp import DepthRaster

__all__ = ["GroundTruth", "demo_scene", "ground_truth_scene"]


def _texture(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Smooth colorful pattern on [0,1]^2 grids; values in [0, 1].

    Frequencies stay low (about one cycle per half image) so that forward
    warping by fractional pixel offsets stays faithful; high-frequency
    texture would alias under the nearest-pixel painter splat and put a
    false floor under every reconstruction metric.
    """
    r = 0.5 + 0.25 * np.sin(2 * np.pi * (1.2 * u + 0.7)) + 0.25 * np.sin(
        2 * np.pi * (1.8 * v)
    )
    g = 0.5 + 0.25 * np.sin(2 * np.pi * (1.5 * v + 0.2)) + 0.25 * np.cos(
        2 * np.pi * (0.8 * u + 1.1 * v)
    )
    b = 0.5 + 0.3 * np.cos(2 * np.pi * (1.0 * u - 0.6 * v + 0.4)) + 0.2 * np.sin(
        2 * np.pi * (1.4 * (u + v))
    )
    return np.clip(np.dstack([r, g, b]), 0.0, 1.0)


def _relief(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Depth relief on [0,1]^2: layered blobs over a tilted base, in [0, 1]."""
    base = 0.55 + 0.3 * (v - 0.5) + 0.15 * np.sin(2 * np.pi * 1.5 * u)
    blob1 = 0.45 * np.exp(-(((u - 0.35) / 0.16) ** 2 + ((v - 0.40) / 0.20) ** 2))
    blob2 = 0.55 * np.exp(-(((u - 0.72) / 0.13) ** 2 + ((v - 0.65) / 0.15) ** 2))
    return np.clip(base - blob1 - blob2, 0.0, 1.0)


def demo_scene(size: int = 64) -> tuple[np.ndarray, DepthRaster, CameraModel]:
    """One posed RGB-D view: (rgb, depth, camera) with depths in [2, 6]."""
    ys, xs = np.mgrid[0:size, 0:size]
    u = xs / (size - 1)
    v = ys / (size - 1)
    rgb = _texture(u, v)
    depth = 2.0 + 4.0 * _relief(u, v)
    cam = CameraModel(
        fx=float(size), fy=float(size),
        cx=(size - 1) / 2.0, cy=(size - 1) / 2.0,
        width=size, height=size,
    )
    return rgb, DepthRaster.from_array(depth), cam


@dataclass
class GroundTruth:
    """A known-good expanded plane stack plus its exact source view."""

    volume: MpiVolume
    assign: np.ndarray   # (H, W) plane index per expanded texel column
    texture: np.ndarray  # (H, W, 3) color per expanded texel column

    def source_view(self) -> tuple[np.ndarray, DepthRaster]:
        """The reference-camera crop: exact rgb and exact per-pixel depth."""
        vol = self.volume
        oy, ox = vol.offset_y, vol.offset_x
        h, w = vol.reference.height, vol.reference.width
        rgb = self.texture[oy : oy + h, ox : ox + w]
        depth = vol.plane_depths[self.assign[oy : oy + h, ox : ox + w]]
        return rgb.copy(), DepthRaster.from_array(depth)


def ground_truth_scene(
    planes: int = 8,
    size: int = 128,
    a: float = 1.25,
    depth_range: tuple[float, float] = (2.0, 8.0),
) -> GroundTruth:
    """Build a plane stack with exactly one opaque texel per column.

    The relief function is quantized to the plane grid, so the scene's
    depth is exactly representable: initializing a new MPI from the source
    view with the same plane count reconstructs the occupied texels
    bit-for-bit, and any rendered view is a perfect reference image.
    """
    if planes < 2:
        raise ValueError(f"planes must be >= 2, got {planes}")
    d_near, d_far = depth_range
    cam = CameraModel(
        fx=float(size), fy=float(size),
        cx=(size - 1) / 2.0, cy=(size - 1) / 2.0,
        width=size, height=size,
    )
    expansion = ExpansionSpec.from_factor(*cam.long_border(), a)
    H = math.ceil(a * size)
    W = math.ceil(a * size)

    ys, xs = np.mgrid[0:H, 0:W]
    u = xs / (W - 1)
    v = ys / (H - 1)
    texture = _texture(u, v)
    assign = np.clip(
        np.round(_relief(u, v) * (planes - 1)).astype(np.int64), 0, planes - 1
    )

    delta = (d_far - d_near) / (planes - 1)
    plane_depths = d_near + delta * np.arange(planes)
    # unoccupied texels carry the same neutral canvas color that init_mpi
    # paints, so bilinear resampling at occupancy edges mixes identical
    # values in this volume and in a pipeline-initialized one
    texels = np.zeros((planes, H, W, 4))
    texels[..., :3] = 0.5
    texels[assign, ys, xs, :3] = texture
    texels[assign, ys, xs, 3] = SIGMA_OPAQUE_SCALE / delta

    volume = MpiVolume(
        texels=texels,
        plane_depths=plane_depths,
        delta=delta,
        reference=cam,
        expansion=expansion,
    ).validate()
    return GroundTruth(volume=volume, assign=assign, texture=texture)
