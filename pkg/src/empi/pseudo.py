"""Pseudo ground-truth views from a single RGB-D image.

A source image with aligned metric depth is forward-warped to nearby
poses.  Disocclusion holes are filled background-first: the fill front is
a global priority queue keyed on depth, so colors flood inward from the
farthest (background) side of each hole before any foreground pixel gets
a chance to bleed.  The filled views act as extra supervision targets.
"""

import heapq
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraModel, Pose
from .warp import DepthRaster, lift_to_points, painter_render, warp_points

__all__ = [
    "AlignResult",
    "InpaintResult",
    "PseudoView",
    "PseudoBundle",
    "align_depth",
    "inpaint_depth_aware",
    "relative_pose",
    "build_pseudo_views",
]


@dataclass
class AlignResult:
    """Affine depth alignment d_metric ~ scale * d_relative + offset."""

    depth: np.ndarray
    scale: float
    offset: float
    rms: float


def align_depth(
    relative: np.ndarray, reference: np.ndarray, mask: np.ndarray | None = None
) -> AlignResult:
    """Fit scale and offset mapping relative depth onto metric reference.

    Minimizes sum((scale * relative + offset - reference)^2) over masked
    pixels.  The fitted map is applied to the full relative raster.  Raises
    if the masked relative values are (near) constant, since scale and
    offset are then unidentifiable, or if the fitted scale is not positive,
    which means the two depths disagree on ordering and no affine map can
    reconcile them.
    """
    rel = np.asarray(relative, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if rel.shape != ref.shape:
        raise ValueError(f"shape mismatch: relative {rel.shape} vs reference {ref.shape}")
    if mask is None:
        mask = np.ones(rel.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != rel.shape:
            raise ValueError(f"mask shape {mask.shape} does not match {rel.shape}")
    x = rel[mask]
    y = ref[mask]
    n = x.size
    if n < 2:
        raise ValueError(f"need at least 2 masked pixels to align, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite depth values under mask")

    xm = x.mean()
    ym = y.mean()
    var = np.mean((x - xm) ** 2)
    if var <= 1e-12 * max(xm * xm, 1.0):
        raise ValueError("relative depth is constant under the mask; scale is unidentifiable")
    scale = float(np.mean((x - xm) * (y - ym)) / var)
    if scale <= 0.0:
        raise ValueError(f"fitted scale {scale:.6g} is not positive; depth orderings disagree")
    offset = float(ym - scale * xm)
    resid = scale * x + offset - y
    rms = float(np.sqrt(np.mean(resid**2)))
    return AlignResult(depth=scale * rel + offset, scale=scale, offset=offset, rms=rms)


@dataclass
class InpaintResult:
    rgb: np.ndarray
    depth: np.ndarray
    filled: np.ndarray  # bool mask of pixels that were holes


_NEIGHBORS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def inpaint_depth_aware(
    rgb: np.ndarray,
    depth: np.ndarray,
    holes: np.ndarray,
    smooth: bool = True,
) -> InpaintResult:
    """Fill hole pixels from their deepest known neighbors, farthest first.

    All fill candidates share one max-heap keyed on (depth, pixel index), so
    the front advancing from the background side of a hole outruns the
    foreground side completely: a disocclusion hole bordered by both layers
    is claimed by the background before any foreground-seeded candidate is
    popped.  Ties and pop order are deterministic.  When smooth is set the
    filled color region gets one 3x3 box-average pass (known pixels keep
    their exact values).
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    holes = np.asarray(holes, dtype=bool)
    h, w = holes.shape
    if rgb.shape != (h, w, 3) or d.shape != (h, w):
        raise ValueError(
            f"shape mismatch: rgb {rgb.shape}, depth {d.shape}, holes {holes.shape}"
        )
    out_rgb = rgb.copy()
    out_d = d.copy()
    if not holes.any():
        return InpaintResult(out_rgb, out_d, holes.copy())
    if holes.all():
        raise ValueError("cannot inpaint an image with no known pixels")

    known = ~holes
    # Seed: every hole pixel next to a known one, at that neighbor's depth.
    heap: list[tuple[float, int]] = []
    for dy, dx in _NEIGHBORS:
        cand = np.zeros((h, w), dtype=bool)
        ch = np.s_[max(0, -dy) : h - max(0, dy)]
        cw = np.s_[max(0, -dx) : w - max(0, dx)]
        nh = np.s_[max(0, dy) : h - max(0, -dy)]
        nw = np.s_[max(0, dx) : w - max(0, -dx)]
        cand[ch, cw] = holes[ch, cw] & known[nh, nw]
        ys, xs = np.nonzero(cand)
        for y, x in zip(ys.tolist(), xs.tolist()):
            heap.append((-out_d[y + dy, x + dx], y * w + x))
    heapq.heapify(heap)

    while heap:
        _, flat = heapq.heappop(heap)
        y, x = divmod(flat, w)
        if known[y, x]:
            continue  # stale entry, already filled at higher priority
        best_d = -np.inf
        best = None
        for dy, dx in _NEIGHBORS:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and known[ny, nx] and out_d[ny, nx] > best_d:
                best_d = out_d[ny, nx]
                best = (ny, nx)
        if best is None:  # unreachable: queued pixels have a known neighbor
            continue
        out_rgb[y, x] = out_rgb[best]
        out_d[y, x] = best_d
        known[y, x] = True
        for dy, dx in _NEIGHBORS:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and not known[ny, nx]:
                heapq.heappush(heap, (-best_d, ny * w + nx))

    if smooth:
        pad = np.pad(out_rgb, ((1, 1), (1, 1), (0, 0)), mode="reflect")
        acc = np.zeros_like(out_rgb)
        for dy in range(3):
            for dx in range(3):
                acc += pad[dy : dy + h, dx : dx + w]
        out_rgb[holes] = acc[holes] / 9.0
    return InpaintResult(out_rgb, out_d, holes.copy())


def relative_pose(src: Pose, dst: Pose) -> Pose:
    """Pose mapping src-camera coordinates to dst-camera coordinates.

    x_dst = R @ x_src + t with R = R_dst R_src^T and t = t_dst - R t_src.
    """
    R = dst.R @ src.R.T
    return Pose(R, dst.t - R @ src.t)


@dataclass
class PseudoView:
    """One warped-and-filled supervision target."""

    rgb: np.ndarray
    depth: DepthRaster
    inpaint_mask: np.ndarray  # pixels synthesized by hole filling
    pose: Pose

    def validate(self) -> "PseudoView":
        h, w = self.inpaint_mask.shape
        if self.rgb.shape != (h, w, 3):
            raise ValueError(f"rgb shape {self.rgb.shape} vs mask ({h}, {w})")
        if (self.depth.height, self.depth.width) != (h, w):
            raise ValueError("depth raster size does not match mask")
        if self.rgb.min() < 0.0 or self.rgb.max() > 1.0:
            raise ValueError("rgb values outside [0, 1]")
        return self


@dataclass
class PseudoBundle:
    camera: CameraModel
    views: list[PseudoView] = field(default_factory=list)


def build_pseudo_views(
    rgb: np.ndarray,
    depth: DepthRaster,
    cam: CameraModel,
    poses: list[Pose],
    splat_radius: int = 0,
    smooth_fill: bool = True,
) -> PseudoBundle:
    """Warp one RGB-D view to each pose and fill the disocclusions.

    cam carries the pose of the source view; each entry of poses is a
    world-to-camera target.  A target equal to the source pose reproduces
    the input exactly with an empty inpaint mask.
    """
    points = lift_to_points(rgb, depth, cam)
    views = []
    for pose in poses:
        rel = relative_pose(cam.pose, pose)
        projected = warp_points(points, cam, rel)
        warped = painter_render(projected, (cam.width, cam.height), splat_radius)
        fill = inpaint_depth_aware(
            warped.rgb, warped.depth.data, warped.hole_mask, smooth=smooth_fill
        )
        views.append(
            PseudoView(
                rgb=np.clip(fill.rgb, 0.0, 1.0),
                depth=DepthRaster.from_array(fill.depth),
                inpaint_mask=fill.filled,
                pose=pose,
            ).validate()
        )
    return PseudoBundle(camera=cam, views=views)
