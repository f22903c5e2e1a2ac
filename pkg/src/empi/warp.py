"""Forward warping of RGB-D images: lift, reproject, z-buffer splat.

The painter stage resolves collisions by nearest depth with ties broken by
the lowest source pixel index, so output is bitwise deterministic for a
given input ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraModel, Pose

__all__ = [
    "DepthRaster",
    "PointSamples",
    "WarpedView",
    "lift_to_points",
    "warp_points",
    "painter_render",
]

HOLE_DEPTH = 1.0  # placeholder stored at hole pixels; never meaningful


@dataclass
class DepthRaster:
    """A dense positive depth map.

    data is (height, width) float32, row major.  Zero, negative, or
    non-finite depths are rejected by :meth:`validate`, which every loader
    calls; internal stages may hold placeholder values at masked pixels.
    """

    width: int
    height: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.shape != (self.height, self.width):
            raise ValueError(
                f"DepthRaster data shape {self.data.shape} does not match "
                f"(height, width) = ({self.height}, {self.width})"
            )

    @classmethod
    def from_array(cls, arr: np.ndarray, validate: bool = True) -> "DepthRaster":
        arr = np.asarray(arr, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"depth array must be 2-D, got shape {arr.shape}")
        r = cls(width=arr.shape[1], height=arr.shape[0], data=arr)
        if validate:
            r.validate()
        return r

    def validate(self) -> "DepthRaster":
        if not np.all(np.isfinite(self.data)):
            raise ValueError("depth raster contains non-finite values")
        if not np.all(self.data > 0):
            raise ValueError("depth raster contains zero or negative values")
        return self


@dataclass
class PointSamples:
    """A colored point set produced by lifting or warping.

    xyz are camera-frame positions; source_index is the flat row-major
    pixel index each point came from, used for deterministic tie breaks.
    """

    xyz: np.ndarray  # (N, 3)
    rgb: np.ndarray  # (N, 3)
    source_index: np.ndarray  # (N,)


@dataclass
class ProjectedSamples:
    """Points projected into a target view, behind-camera samples removed."""

    pixels: np.ndarray  # (M, 2) continuous target pixel coords
    depths: np.ndarray  # (M,)
    rgb: np.ndarray  # (M, 3)
    source_index: np.ndarray  # (M,)
    culled: int  # number of samples dropped for z <= 0


@dataclass
class WarpedView:
    """Forward-warp result: rgb, depth, and a hole mask.

    Pixels with hole_mask True received no sample; their rgb is 0 and their
    depth is the HOLE_DEPTH placeholder.  Neither is meaningful.
    """

    rgb: np.ndarray  # (H, W, 3) in [0, 1]
    depth: DepthRaster
    hole_mask: np.ndarray  # (H, W) bool


def lift_to_points(rgb: np.ndarray, depth: DepthRaster, cam: CameraModel) -> PointSamples:
    """Lift every pixel of an RGB-D image to a camera-frame point.

    Returns exactly width * height points in row-major pixel order.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    h, w = depth.height, depth.width
    if rgb.shape != (h, w, 3):
        raise ValueError(
            f"rgb shape {rgb.shape} does not match depth ({h}, {w})"
        )
    if (cam.width, cam.height) != (w, h):
        raise ValueError(
            f"camera size ({cam.width}, {cam.height}) does not match raster ({w}, {h})"
        )
    ys, xs = np.mgrid[0:h, 0:w]
    d = depth.data.astype(np.float64)
    x = (xs - cam.cx) / cam.fx * d
    y = (ys - cam.cy) / cam.fy * d
    xyz = np.stack([x, y, d], axis=-1).reshape(-1, 3)
    return PointSamples(
        xyz=xyz,
        rgb=rgb.reshape(-1, 3),
        source_index=np.arange(h * w, dtype=np.int64),
    )


def warp_points(
    points: PointSamples, target_cam: CameraModel, relative_pose: Pose
) -> ProjectedSamples:
    """Transform points into a target camera and project them.

    relative_pose maps source-camera coordinates to target-camera
    coordinates (x_tgt = R @ x_src + t).  Samples landing at or behind the
    target camera plane are culled and counted.
    """
    xyz_t = points.xyz @ relative_pose.R.T + relative_pose.t
    z = xyz_t[:, 2]
    keep = z > 0
    culled = int((~keep).sum())
    xyz_t = xyz_t[keep]
    z = z[keep]
    u = target_cam.fx * xyz_t[:, 0] / z + target_cam.cx
    v = target_cam.fy * xyz_t[:, 1] / z + target_cam.cy
    return ProjectedSamples(
        pixels=np.stack([u, v], axis=-1),
        depths=z,
        rgb=points.rgb[keep],
        source_index=points.source_index[keep],
        culled=culled,
    )


def painter_render(
    samples: ProjectedSamples,
    target_size: tuple[int, int],
    splat_radius: int = 0,
) -> WarpedView:
    """Rasterize projected samples with a z-buffer.

    target_size is (width, height).  splat_radius 0 writes each sample to
    its round-half-up nearest pixel; radius 1 covers the 2x2 pixel block
    around the sample position.  The nearest-depth sample wins each pixel;
    exact depth ties go to the lowest source index.  Pixels no sample
    touches are reported in hole_mask.
    """
    if splat_radius not in (0, 1):
        raise ValueError(f"splat_radius must be 0 or 1, got {splat_radius}")
    w, h = target_size
    u = samples.pixels[:, 0]
    v = samples.pixels[:, 1]

    if splat_radius == 0:
        xs = [np.floor(u + 0.5).astype(np.int64)]
        ys = [np.floor(v + 0.5).astype(np.int64)]
    else:
        x0 = np.floor(u).astype(np.int64)
        y0 = np.floor(v).astype(np.int64)
        xs = [x0, x0 + 1, x0, x0 + 1]
        ys = [y0, y0, y0 + 1, y0 + 1]

    # Gather all candidate writes across the footprint.
    cand_px, cand_depth, cand_rgb, cand_src = [], [], [], []
    for x, y in zip(xs, ys):
        inside = (x >= 0) & (x < w) & (y >= 0) & (y < h)
        cand_px.append((y[inside] * w + x[inside]))
        cand_depth.append(samples.depths[inside])
        cand_rgb.append(samples.rgb[inside])
        cand_src.append(samples.source_index[inside])
    flat = np.concatenate(cand_px) if cand_px else np.empty(0, np.int64)
    depth = np.concatenate(cand_depth) if cand_depth else np.empty(0)
    rgb = np.concatenate(cand_rgb) if cand_rgb else np.empty((0, 3))
    src = np.concatenate(cand_src) if cand_src else np.empty(0, np.int64)

    # Nearest depth wins, ties to lowest source index: sort by
    # (pixel, depth, source) and keep the first row per pixel.
    order = np.lexsort((src, depth, flat))
    flat, depth, rgb = flat[order], depth[order], rgb[order]
    first = np.ones(len(flat), dtype=bool)
    first[1:] = flat[1:] != flat[:-1]

    out_rgb = np.zeros((h * w, 3), dtype=np.float64)
    out_depth = np.full(h * w, HOLE_DEPTH, dtype=np.float64)
    hole = np.ones(h * w, dtype=bool)
    idx = flat[first]
    out_rgb[idx] = rgb[first]
    out_depth[idx] = depth[first]
    hole[idx] = False

    return WarpedView(
        rgb=out_rgb.reshape(h, w, 3),
        depth=DepthRaster(width=w, height=h, data=out_depth.reshape(h, w)),
        hole_mask=hole.reshape(h, w),
    )
