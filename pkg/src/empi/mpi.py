"""Expanded multiplane image volume: construction, resampling, compositing.

An MpiVolume holds P fronto-parallel RGBA-sigma planes, evenly spaced in
depth through the reference camera's frustum and enlarged laterally by an
expansion factor so the scene stays covered when the camera rotates.  Plane
texel (u, v) corresponds to pixel (u, v) of the *expanded* reference camera,
whose principal point is the source camera's shifted by the centering
offset.  All functions here are pure; nothing mutates a volume in place.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .camera import (
    CameraModel,
    ExpansionSpec,
    Pose,
    homography_pose,
    plane_homography,
)
from .metrics import LUMA_WEIGHTS
from .warp import DepthRaster

__all__ = [
    "SIGMA_OPAQUE_SCALE",
    "BilateralKernel",
    "CoverageWarning",
    "GatherMap",
    "InitResult",
    "MpiVolume",
    "apply_gather",
    "bilateral_filter",
    "composite",
    "gather_map",
    "init_mpi",
    "render_view",
    "resample_plane",
    "view_gather_maps",
]

# sigma * delta for texels seeded from the source view; transmits exp(-20).
SIGMA_OPAQUE_SCALE = 20.0

_SPACING_TOL = 1e-9
_F32_REL = 2.0 ** -22  # 4 ulp of float32, covers serialized plane depths


class CoverageWarning(UserWarning):
    """Raised when a render had to fall back to transparency off-plane."""


@dataclass
class MpiVolume:
    """P x H x W x 4 texel grid (r, g, b, sigma) over evenly spaced depths.

    texels: float array, rgb in [0, 1], sigma >= 0 (1/depth units).
    plane_depths: strictly increasing, constant spacing ``delta``.
    reference: the source camera (its width/height are the source size).
    freeze: optional (P, H, W) bool mask of texels the optimizer must not
    touch; None means nothing is frozen.
    """

    texels: np.ndarray
    plane_depths: np.ndarray
    delta: float
    reference: CameraModel
    expansion: ExpansionSpec
    freeze: np.ndarray | None = None
    spacing: str = "depth"

    def __post_init__(self):
        if self.spacing not in ("depth", "disparity"):
            raise ValueError(f"spacing must be 'depth' or 'disparity', got {self.spacing!r}")
        self.texels = np.asarray(self.texels)
        self.plane_depths = np.asarray(self.plane_depths, dtype=np.float64)
        if self.texels.ndim != 4 or self.texels.shape[-1] != 4:
            raise ValueError(
                f"texels must be (P, H, W, 4), got shape {self.texels.shape}"
            )
        if self.plane_depths.shape != (self.texels.shape[0],):
            raise ValueError("plane_depths length must match texel plane count")
        if self.freeze is not None:
            self.freeze = np.asarray(self.freeze, dtype=bool)
            if self.freeze.shape != self.texels.shape[:3]:
                raise ValueError(
                    f"freeze mask shape {self.freeze.shape} must be "
                    f"{self.texels.shape[:3]}"
                )

    # -- shape helpers -------------------------------------------------
    @property
    def num_planes(self) -> int:
        return self.texels.shape[0]

    @property
    def height(self) -> int:
        return self.texels.shape[1]

    @property
    def width(self) -> int:
        return self.texels.shape[2]

    @property
    def offset_x(self) -> int:
        return (self.width - self.reference.width) // 2

    @property
    def offset_y(self) -> int:
        return (self.height - self.reference.height) // 2

    def expanded_cam(self) -> CameraModel:
        """The reference camera widened to the full expanded texel grid."""
        r = self.reference
        return CameraModel(
            fx=r.fx,
            fy=r.fy,
            cx=r.cx + self.offset_x,
            cy=r.cy + self.offset_y,
            width=self.width,
            height=self.height,
            R=r.R,
            t=r.t,
        )

    def plane_deltas(self) -> np.ndarray:
        """Per-plane depth thickness used when converting sigma to alpha.

        Depth spacing: the constant delta for every plane.  Disparity
        spacing: delta is constant in 1/depth, so the depth gaps vary; each
        plane takes the gap to its next-farther neighbor, the last plane
        reuses the final gap.
        """
        P = self.num_planes
        if self.spacing == "depth" or P == 1:
            return np.full(P, float(self.delta))
        gaps = np.diff(self.plane_depths)
        return np.concatenate([gaps, gaps[-1:]])

    def validate(self) -> "MpiVolume":
        d = self.plane_depths
        if not np.all(np.isfinite(d)) or not np.all(d > 0):
            raise ValueError("plane depths must be finite and positive")
        if self.num_planes > 1:
            gaps = np.diff(d)
            if not np.all(gaps > 0):
                raise ValueError("plane depths must be strictly increasing")
            # tolerance admits depths that round-tripped through float32
            # storage; a wrong spacing family is off by orders of magnitude
            if self.spacing == "depth":
                tol = max(_SPACING_TOL * max(1.0, abs(self.delta)), _F32_REL * d.max())
                if np.abs(gaps - self.delta).max() > tol:
                    raise ValueError("plane spacing is not the constant delta")
            else:
                disp_gaps = -np.diff(1.0 / d)
                tol = max(
                    _SPACING_TOL * max(1.0, abs(self.delta)), _F32_REL / d.min()
                )
                if np.abs(disp_gaps - self.delta).max() > tol:
                    raise ValueError("disparity spacing is not the constant delta")
        if np.any(self.texels[..., 3] < 0):
            raise ValueError("sigma channel contains negative values")
        rgb = self.texels[..., :3]
        if rgb.min() < 0.0 or rgb.max() > 1.0:
            raise ValueError("rgb channels must lie in [0, 1]")
        a = self.expansion.a
        if self.height != math.ceil(a * self.reference.height) or self.width != math.ceil(
            a * self.reference.width
        ):
            raise ValueError(
                "texel grid size does not match ceil(a * source size)"
            )
        return self

    def copy(self) -> "MpiVolume":
        return MpiVolume(
            texels=self.texels.copy(),
            plane_depths=self.plane_depths.copy(),
            delta=self.delta,
            reference=self.reference,
            expansion=self.expansion,
            freeze=None if self.freeze is None else self.freeze.copy(),
            spacing=self.spacing,
        )


@dataclass
class InitResult:
    volume: MpiVolume
    clamped: int  # source pixels whose depth fell outside [d_near, d_far]


def init_mpi(
    rgb: np.ndarray,
    depth: DepthRaster,
    cam: CameraModel,
    planes: int,
    expansion: ExpansionSpec,
    depth_range: tuple[float, float] | None = None,
    dtype=np.float32,
    spacing: str = "depth",
) -> InitResult:
    """Seed an expanded MPI from one posed RGB-D view.

    Every source pixel lands on the plane nearest its depth, centered in the
    expanded canvas, with sigma set opaque (SIGMA_OPAQUE_SCALE over the
    plane's thickness).  Those texels are frozen; all others start at
    rgb 0.5, sigma 0, and are trainable.  Pixels whose depth falls outside
    the plane range are clamped to the nearest end plane and counted.

    spacing "depth" places planes evenly in depth (the default); "disparity"
    places them evenly in 1/depth, which concentrates planes near the
    camera.  Nearest-plane assignment happens in the spacing domain.
    """
    if planes < 2:
        raise ValueError(f"planes must be >= 2, got {planes}")
    rgb = np.asarray(rgb, dtype=np.float64)
    h, w = depth.height, depth.width
    if rgb.shape != (h, w, 3):
        raise ValueError(f"rgb shape {rgb.shape} does not match depth ({h}, {w})")
    if (cam.width, cam.height) != (w, h):
        raise ValueError("camera size does not match the source image")
    if rgb.min() < 0.0 or rgb.max() > 1.0:
        raise ValueError("source rgb must lie in [0, 1]")
    expansion.check_consistent(*cam.long_border())

    d = depth.data.astype(np.float64)
    if depth_range is None:
        d_near, d_far = float(d.min()), float(d.max())
        if d_near == d_far:
            d_far = d_near + 1.0
    else:
        d_near, d_far = map(float, depth_range)
    if not (0 < d_near < d_far):
        raise ValueError(f"need 0 < d_near < d_far, got ({d_near}, {d_far})")

    if spacing == "depth":
        delta = (d_far - d_near) / (planes - 1)
        plane_depths = d_near + delta * np.arange(planes)
    elif spacing == "disparity":
        delta = (1.0 / d_near - 1.0 / d_far) / (planes - 1)
        plane_depths = 1.0 / (1.0 / d_near - delta * np.arange(planes))
    else:
        raise ValueError(f"spacing must be 'depth' or 'disparity', got {spacing!r}")

    H = math.ceil(expansion.a * h)
    W = math.ceil(expansion.a * w)
    off_x = (W - w) // 2
    off_y = (H - h) // 2

    texels = np.zeros((planes, H, W, 4), dtype=dtype)
    texels[..., :3] = 0.5
    freeze = np.zeros((planes, H, W), dtype=bool)

    clamped = int(np.count_nonzero((d < d_near) | (d > d_far)))
    if clamped:
        warnings.warn(
            f"{clamped} source pixels have depth outside [{d_near}, {d_far}]; "
            "clamped to the end planes",
            stacklevel=2,
        )
    if spacing == "depth":
        bins = np.round((d - d_near) / delta)
    else:
        bins = np.round((1.0 / d_near - 1.0 / d) / delta)
    bins = np.clip(bins.astype(np.int64), 0, planes - 1)

    plane_thickness = np.full(planes, delta) if spacing == "depth" else np.concatenate(
        [np.diff(plane_depths), np.diff(plane_depths)[-1:]]
    )
    ys, xs = np.mgrid[0:h, 0:w]
    py = ys + off_y
    px = xs + off_x
    texels[bins, py, px, :3] = rgb
    texels[bins, py, px, 3] = SIGMA_OPAQUE_SCALE / plane_thickness[bins]
    freeze[bins, py, px] = True

    vol = MpiVolume(
        texels=texels,
        plane_depths=plane_depths,
        delta=delta,
        reference=cam,
        expansion=expansion,
        freeze=freeze,
        spacing=spacing,
    ).validate()
    return InitResult(volume=vol, clamped=clamped)


# -- plane resampling ----------------------------------------------------


@dataclass
class GatherMap:
    """Precomputed bilinear gather: output pixel -> four plane texels.

    Built once per (view, plane) pair and reused across optimizer steps.
    iy0/ix0 address the top-left corner; fy/fx are the fractional offsets.
    Invalid output pixels (off-plane or behind the induced plane) receive
    fully transparent samples.
    """

    iy0: np.ndarray  # (h, w) int
    ix0: np.ndarray
    fy: np.ndarray  # (h, w) float64
    fx: np.ndarray
    valid: np.ndarray  # (h, w) bool
    in_shape: tuple[int, int]

    @property
    def oob_count(self) -> int:
        return int((~self.valid).sum())

    def corner_weights(self):
        w11 = self.fy * self.fx
        w10 = self.fy - w11
        w01 = self.fx - w11
        w00 = 1.0 - self.fy - self.fx + w11
        return w00, w01, w10, w11


def gather_map(
    homography: np.ndarray, out_size: tuple[int, int], in_shape: tuple[int, int]
) -> GatherMap:
    """Trace output pixels through a gather homography into a plane grid.

    ``homography`` maps homogeneous output pixels to input (plane) pixel
    coordinates.  out_size is (width, height); in_shape is the plane's
    (H, W).
    """
    Hm = np.asarray(homography, dtype=np.float64)
    if Hm.shape != (3, 3):
        raise ValueError(f"homography must be 3x3, got {Hm.shape}")
    if abs(np.linalg.det(Hm)) < 1e-15:
        raise ValueError("degenerate (singular) homography")
    w_out, h_out = out_size
    in_h, in_w = in_shape
    if in_h < 2 or in_w < 2:
        raise ValueError("plane must be at least 2x2 for bilinear sampling")
    ys, xs = np.mgrid[0:h_out, 0:w_out].astype(np.float64)
    denom = Hm[2, 0] * xs + Hm[2, 1] * ys + Hm[2, 2]
    valid = denom > 1e-12
    safe = np.where(valid, denom, 1.0)
    sx = (Hm[0, 0] * xs + Hm[0, 1] * ys + Hm[0, 2]) / safe
    sy = (Hm[1, 0] * xs + Hm[1, 1] * ys + Hm[1, 2]) / safe
    valid &= (sx >= 0.0) & (sx <= in_w - 1.0) & (sy >= 0.0) & (sy <= in_h - 1.0)
    sx = np.where(valid, sx, 0.0)
    sy = np.where(valid, sy, 0.0)
    ix0 = np.minimum(np.floor(sx), in_w - 2).astype(np.int64)
    iy0 = np.minimum(np.floor(sy), in_h - 2).astype(np.int64)
    return GatherMap(
        iy0=iy0,
        ix0=ix0,
        fy=sy - iy0,
        fx=sx - ix0,
        valid=valid,
        in_shape=(in_h, in_w),
    )


def apply_gather(plane: np.ndarray, gm: GatherMap) -> np.ndarray:
    """Bilinearly sample a (H, W, C) plane through a GatherMap (float64)."""
    in_h, in_w = gm.in_shape
    flat = np.asarray(plane, dtype=np.float64).reshape(in_h * in_w, -1)
    base = gm.iy0 * in_w + gm.ix0
    w00, w01, w10, w11 = gm.corner_weights()
    out = (
        flat[base] * w00[..., None]
        + flat[base + 1] * w01[..., None]
        + flat[base + in_w] * w10[..., None]
        + flat[base + in_w + 1] * w11[..., None]
    )
    out[~gm.valid] = 0.0
    return out.reshape(gm.valid.shape + (plane.shape[-1],))


def resample_plane(
    plane: np.ndarray, homography: np.ndarray, out_size: tuple[int, int]
) -> np.ndarray:
    """Warp one RGBA-sigma plane by a gather homography.

    The homography maps output pixels to plane coordinates (gather
    direction).  Samples falling outside the plane return fully transparent
    (0, 0, 0, 0).  The operation is linear in the texel values.
    """
    plane = np.asarray(plane)
    if plane.ndim != 3:
        raise ValueError(f"plane must be (H, W, C), got shape {plane.shape}")
    gm = gather_map(homography, out_size, plane.shape[:2])
    return apply_gather(plane, gm)


# -- compositing ----------------------------------------------------------


def composite(
    planes: np.ndarray, delta, return_alpha: bool = False
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Volume-render warped planes front to back.

    planes is (P, h, w, 4) ordered near to far.  Per plane
    ``alpha = 1 - exp(-sigma * delta)``; transmittance ahead of plane k is
    the product of (1 - alpha) over nearer planes; the output accumulates
    transmittance * alpha * color.  delta is the plane thickness: a scalar,
    or a (P,) vector when the spacing varies.  With return_alpha, also
    returns the accumulated alpha map (1 - final transmittance).
    """
    planes = np.asarray(planes, dtype=np.float64)
    if planes.ndim != 4 or planes.shape[-1] != 4:
        raise ValueError(f"planes must be (P, h, w, 4), got shape {planes.shape}")
    delta = np.asarray(delta, dtype=np.float64)
    if delta.ndim == 1 and delta.shape == (planes.shape[0],):
        delta = delta[:, None, None]
    elif delta.ndim != 0:
        raise ValueError(
            f"delta must be a scalar or ({planes.shape[0]},), got shape {delta.shape}"
        )
    if not np.all(delta > 0):
        raise ValueError(f"delta must be > 0, got {delta}")
    alpha = 1.0 - np.exp(-planes[..., 3] * delta)  # (P, h, w)
    # Transmittance: T[0] = 1, T[k] = prod_{j<k} (1 - alpha[j]).
    trans = np.ones_like(alpha)
    np.cumprod(1.0 - alpha[:-1], axis=0, out=trans[1:])
    weight = trans * alpha  # (P, h, w)
    rgb = np.einsum("phw,phwc->hwc", weight, planes[..., :3])
    if return_alpha:
        return rgb, weight.sum(axis=0)
    return rgb


def render_view(
    mpi: MpiVolume,
    target_cam: CameraModel,
    target_pose: Pose,
    return_alpha: bool = False,
    coverage_threshold: float = 0.0,
):
    """Render the MPI into a target camera.

    Each plane is warped by the homography it induces between the expanded
    reference camera and the target (computed at that plane's depth, then
    inverted for gather sampling), and the warped stack is composited front
    to back.  Rays that exit the expanded frustum sample transparent and a
    CoverageWarning is emitted.  target_cam supplies intrinsics and size;
    target_pose supplies the world-to-camera pose.
    """
    maps = view_gather_maps(mpi, target_cam, target_pose)
    tgt_h, tgt_w = target_cam.height, target_cam.width
    warped = np.empty((mpi.num_planes, tgt_h, tgt_w, 4), dtype=np.float64)
    oob = 0
    for k, gm in enumerate(maps):
        oob += gm.oob_count
        warped[k] = apply_gather(mpi.texels[k], gm)
    if oob > 0:
        warnings.warn(
            f"{oob} plane samples fell outside the expanded frustum; "
            "rendered transparent",
            CoverageWarning,
            stacklevel=2,
        )
    delta = mpi.delta if mpi.spacing == "depth" else mpi.plane_deltas()
    return composite(warped, delta, return_alpha=return_alpha)


def view_gather_maps(
    mpi: MpiVolume, target_cam: CameraModel, target_pose: Pose
) -> list[GatherMap]:
    """Per-plane gather maps from the expanded reference into a target view.

    Shared by render_view and the optimizer (which precomputes these once
    per view and reuses them every step, since they depend only on
    geometry).
    """
    exp_cam = mpi.expanded_cam()
    tgt = target_cam.with_pose(target_pose)
    rel = homography_pose(exp_cam, tgt)
    out_size = (tgt.width, tgt.height)
    maps = []
    for k in range(mpi.num_planes):
        H_fwd = plane_homography(exp_cam, tgt, rel, float(mpi.plane_depths[k]))
        try:
            H_gather = np.linalg.inv(H_fwd)
        except np.linalg.LinAlgError as e:
            raise ValueError(f"degenerate homography for plane {k}: {e}") from e
        maps.append(gather_map(H_gather, out_size, (mpi.height, mpi.width)))
    return maps


# -- edge-aware smoothing --------------------------------------------------


@dataclass
class BilateralKernel:
    """Trainable edge-preserving filter parameters.

    spatial_weights is a size x size grid, initialized to a Gaussian of
    scale sigma_s and free to train afterwards.  sigma_r scales the fixed
    Gaussian range kernel evaluated on luma differences; one weight map is
    shared by all color channels.
    """

    size: int
    sigma_r: float
    spatial_weights: np.ndarray
    sigma_s: float = 1.5  # initialization scale only; not used after create

    def __post_init__(self):
        if self.size % 2 != 1 or self.size < 1:
            raise ValueError(f"kernel size must be odd and >= 1, got {self.size}")
        if not (self.sigma_r > 0):
            raise ValueError(f"sigma_r must be > 0, got {self.sigma_r}")
        self.spatial_weights = np.asarray(self.spatial_weights, dtype=np.float64)
        if self.spatial_weights.shape != (self.size, self.size):
            raise ValueError(
                f"spatial_weights must be {self.size}x{self.size}, "
                f"got {self.spatial_weights.shape}"
            )
        if not np.all(np.isfinite(self.spatial_weights)):
            raise ValueError("spatial_weights contain non-finite values")

    @classmethod
    def create(
        cls, size: int = 5, sigma_s: float = 1.5, sigma_r: float = 0.1
    ) -> "BilateralKernel":
        half = size // 2
        g = np.arange(size) - half
        w = np.exp(-(g[:, None] ** 2 + g[None, :] ** 2) / (2.0 * sigma_s**2))
        return cls(size=size, sigma_r=sigma_r, spatial_weights=w, sigma_s=sigma_s)

    def copy(self) -> "BilateralKernel":
        return BilateralKernel(
            self.size, self.sigma_r, self.spatial_weights.copy(), self.sigma_s
        )


def reflect_index(idx: np.ndarray, n: int) -> np.ndarray:
    """Mirror indices into [0, n) without repeating the border sample."""
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    j = np.mod(idx, period)
    return np.where(j >= n, period - j, j)


def _bilateral_terms(image: np.ndarray, kernel: BilateralKernel):
    """Yield (dy, dx, ry, rx, range_w) per kernel offset.

    range_w is the Gaussian of the luma difference between each pixel and
    its reflected neighbor; the spatial weight is not applied here.
    """
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    Y = img @ LUMA_WEIGHTS
    half = kernel.size // 2
    inv_2sr2 = 1.0 / (2.0 * kernel.sigma_r**2)
    rows = np.arange(h)
    cols = np.arange(w)
    for dy in range(-half, half + 1):
        ry = reflect_index(rows + dy, h)
        for dx in range(-half, half + 1):
            rx = reflect_index(cols + dx, w)
            Yq = Y[np.ix_(ry, rx)]
            range_w = np.exp(-((Y - Yq) ** 2) * inv_2sr2)
            yield dy, dx, ry, rx, range_w


def bilateral_filter(image: np.ndarray, kernel: BilateralKernel) -> np.ndarray:
    """Edge-preserving smoothing with trainable spatial weights.

    Each output pixel is the weighted mean of its size x size neighborhood
    (reflect-padded); weights are spatial_weights[o] times a Gaussian on the
    luma difference, shared across channels.  Computed in difference form,
    so a constant image and a center-impulse kernel both reproduce the input
    bitwise.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[-1] != 3:
        raise ValueError(f"image must be (H, W, 3), got shape {img.shape}")
    half = kernel.size // 2
    acc_w = np.zeros(img.shape[:2])
    acc_d = np.zeros_like(img)
    for dy, dx, ry, rx, range_w in _bilateral_terms(img, kernel):
        w = kernel.spatial_weights[dy + half, dx + half] * range_w
        acc_w += w
        if dy == 0 and dx == 0:
            continue  # neighbor difference is identically zero
        acc_d += w[..., None] * (img[np.ix_(ry, rx)] - img)
    if np.any(acc_w == 0):
        raise ValueError("bilateral weights sum to zero at some pixel")
    return img + acc_d / acc_w[..., None]
