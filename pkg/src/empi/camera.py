"""Pinhole camera geometry: poses, plane homographies, frustum expansion.

Conventions used throughout the package:

* Right-handed coordinates. A camera looks along its +z axis; image x is
  right, image y is down.
* Poses are world-to-camera: ``x_cam = R @ x_world + t``.
* Pixel coordinates are continuous, with integer values at pixel centers.
  Pixel (0, 0) is the top-left pixel; a ``width``-pixel row spans
  [-0.5, width - 0.5].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CameraModel",
    "Pose",
    "PoseRanges",
    "ExpansionSpec",
    "rot_x",
    "rot_y",
    "rot_z",
    "decompose_yaw_pitch",
    "plane_homography",
    "homography_pose",
    "expansion_factor",
    "expanded_fov",
    "backproject",
    "project",
    "sample_poses",
]

_ORTHO_TOL = 1e-6


def _check_rotation(R, where: str) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise ValueError(f"{where}: rotation must be 3x3, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise ValueError(f"{where}: rotation contains non-finite entries")
    ortho_err = float(np.abs(R.T @ R - np.eye(3)).max())
    if ortho_err > _ORTHO_TOL:
        raise ValueError(
            f"{where}: rotation is not orthonormal (max |R^T R - I| = {ortho_err:.3g})"
        )
    det = float(np.linalg.det(R))
    if abs(det - 1.0) > _ORTHO_TOL:
        raise ValueError(f"{where}: rotation determinant is {det:.9f}, expected +1")
    return R


@dataclass
class Pose:
    """Rigid world-to-camera transform ``x_cam = R @ x_world + t``."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.R = _check_rotation(self.R, "Pose.R")
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("Pose.t contains non-finite entries")
        self.t = t

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def inverse(self) -> "Pose":
        return Pose(self.R.T, -self.R.T @ self.t)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.R.T @ self.t

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply the pose to world points of shape (..., 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.R.T + self.t


@dataclass
class CameraModel:
    """Pinhole camera: pixel intrinsics plus a world-to-camera pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("fx", "fy"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"CameraModel.{name} must be finite and > 0, got {v}")
            setattr(self, name, v)
        for name in ("cx", "cy"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"CameraModel.{name} must be finite, got {v}")
            setattr(self, name, v)
        for name in ("width", "height"):
            v = int(getattr(self, name))
            if v < 1:
                raise ValueError(f"CameraModel.{name} must be >= 1, got {v}")
            setattr(self, name, v)
        self.R = _check_rotation(self.R, "CameraModel.R")
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(self.t)):
            raise ValueError("CameraModel.t contains non-finite entries")

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def K_inv(self) -> np.ndarray:
        # Closed form; better conditioned than a generic inverse.
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    @property
    def pose(self) -> Pose:
        return Pose(self.R, self.t)

    def long_border(self) -> tuple[float, int]:
        """(focal, border) pair for the longer image side, used by expansion."""
        if self.width >= self.height:
            return self.fx, self.width
        return self.fy, self.height

    def with_pose(self, pose: Pose) -> "CameraModel":
        return CameraModel(
            self.fx, self.fy, self.cx, self.cy, self.width, self.height, pose.R, pose.t
        )


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def decompose_yaw_pitch(A: np.ndarray) -> tuple[float, float]:
    """Recover (yaw, pitch) from ``A = rot_y(yaw) @ rot_x(pitch)``."""
    A = np.asarray(A, dtype=np.float64)
    yaw = math.atan2(-A[2, 0], A[0, 0])
    pitch = math.atan2(-A[1, 2], A[1, 1])
    return yaw, pitch


@dataclass(frozen=True)
class ExpansionSpec:
    """Frustum expansion: scale factor ``a`` and full expanded angle ``theta``.

    The two are tied through the camera's long border ``w`` and matching
    focal ``f`` by  ``w * a / (2 f) = tan(theta / 2)``.
    """

    a: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a >= 1.0):
            raise ValueError(f"ExpansionSpec.a must be >= 1, got {self.a}")
        if not (0.0 < self.theta < math.pi):
            raise ValueError(
                f"ExpansionSpec.theta must lie in (0, pi), got {self.theta}"
            )

    @classmethod
    def from_theta(cls, focal: float, border: float, theta: float) -> "ExpansionSpec":
        return cls(expansion_factor(focal, border, theta), theta)

    @classmethod
    def from_factor(cls, focal: float, border: float, a: float) -> "ExpansionSpec":
        return cls(a, expanded_fov(focal, border, a))

    def check_consistent(self, focal: float, border: float, tol: float = 1e-9) -> None:
        """Verify a and theta satisfy the expansion relation for this camera."""
        a_from_theta = expansion_factor(focal, border, self.theta)
        if abs(a_from_theta - self.a) > tol * max(1.0, abs(self.a)):
            raise ValueError(
                f"ExpansionSpec inconsistent: a={self.a!r} but theta={self.theta!r} "
                f"implies a={a_from_theta!r} for focal={focal}, border={border}"
            )


def expansion_factor(focal: float, border: float, theta: float) -> float:
    """Scale factor that widens a camera's frustum to full angle ``theta``.

    Derived from ``border * a / (2 focal) = tan(theta / 2)``.
    """
    if not (math.isfinite(theta) and 0.0 < theta < math.pi):
        raise ValueError(f"theta must lie in (0, pi), got {theta}")
    if focal <= 0 or border <= 0:
        raise ValueError("focal and border must be positive")
    return 2.0 * focal * math.tan(theta / 2.0) / border


def expanded_fov(focal: float, border: float, a: float) -> float:
    """Full frustum angle reached by scaling the image plane by ``a``."""
    if not (math.isfinite(a) and a > 0):
        raise ValueError(f"a must be finite and > 0, got {a}")
    if focal <= 0 or border <= 0:
        raise ValueError("focal and border must be positive")
    return 2.0 * math.atan(a * border / (2.0 * focal))


def plane_homography(
    src: CameraModel,
    dst: CameraModel,
    relative_pose: Pose,
    plane_depth: float,
    normal: np.ndarray | None = None,
) -> np.ndarray:
    """Pixel map induced by a plane: ``H = K_dst (R - t n^T / d) K_src^-1``.

    Maps homogeneous pixels of ``src`` to pixels of ``dst`` for points on the
    plane ``n^T x = plane_depth`` expressed in the src camera frame (default
    normal (0, 0, 1): fronto-parallel at depth ``plane_depth``).

    Direction convention: ``relative_pose`` holds the (R, t) of the rigid map
    ``x_dst = R @ x_src - t``.  Equivalently the dst camera sits at center
    ``R^T t`` with orientation ``R^T`` in the src frame; for R = I, ``t`` is
    simply the dst camera's position in the src frame, so t = (0, 0, tau)
    moves the camera toward the plane and magnifies by d / (d - tau).

    Use :func:`homography_pose` to build ``relative_pose`` from two world
    poses.  Only the matrix changes per plane depth; callers rendering many
    planes should reuse the pose.
    """
    if not (math.isfinite(plane_depth) and plane_depth > 0):
        raise ValueError(f"plane_depth must be finite and > 0, got {plane_depth}")
    if normal is None:
        n = np.array([0.0, 0.0, 1.0])
    else:
        n = np.asarray(normal, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(n)) or np.linalg.norm(n) == 0:
            raise ValueError("plane normal must be finite and nonzero")
    M = relative_pose.R - np.outer(relative_pose.t, n) / plane_depth
    return dst.K @ M @ src.K_inv


def homography_pose(src: CameraModel, dst: CameraModel) -> Pose:
    """(R, t) in the convention :func:`plane_homography` expects.

    Built from the two cameras' world poses so that the resulting homography
    maps src pixels onto dst pixels: R = R_dst R_src^T, t = R t_src - t_dst.
    """
    R_rel = dst.R @ src.R.T
    t = R_rel @ src.t - dst.t
    return Pose(R_rel, t)


def backproject(pixels: np.ndarray, depths: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Lift pixels (..., 2) at depths (...) to camera-frame points (..., 3)."""
    px = np.asarray(pixels, dtype=np.float64)
    d = np.asarray(depths, dtype=np.float64)
    if px.shape[-1] != 2:
        raise ValueError(f"pixels must have last dimension 2, got shape {px.shape}")
    if d.shape != px.shape[:-1]:
        raise ValueError(
            f"depth shape {d.shape} does not match pixel shape {px.shape[:-1]}"
        )
    x = (px[..., 0] - cam.cx) / cam.fx * d
    y = (px[..., 1] - cam.cy) / cam.fy * d
    return np.stack([x, y, d], axis=-1)


def project(
    points: np.ndarray, cam: CameraModel
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project camera-frame points (..., 3) to pixels.

    Returns (pixels (..., 2), depths (...), valid (...)).  Points at or
    behind the camera plane (z <= 0) are flagged invalid with NaN pixel
    coordinates rather than raising.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[-1] != 3:
        raise ValueError(f"points must have last dimension 3, got shape {pts.shape}")
    z = pts[..., 2]
    valid = z > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cam.fx * pts[..., 0] / z + cam.cx
        v = cam.fy * pts[..., 1] / z + cam.cy
    u = np.where(valid, u, np.nan)
    v = np.where(valid, v, np.nan)
    return np.stack([u, v], axis=-1), z.copy(), valid


@dataclass(frozen=True)
class PoseRanges:
    """Sampling bounds for :func:`sample_poses`.

    max_translation is per-axis in the reference camera's frame; yaw and
    pitch are half-ranges in radians.
    """

    max_translation: tuple[float, float, float] = (0.05, 0.05, 0.05)
    max_yaw: float = math.radians(5.0)
    max_pitch: float = math.radians(5.0)

    def __post_init__(self):
        if len(self.max_translation) != 3 or any(
            not (math.isfinite(v) and v >= 0) for v in self.max_translation
        ):
            raise ValueError("max_translation must be three nonnegative floats")
        if self.max_yaw < 0 or self.max_pitch < 0:
            raise ValueError("max_yaw and max_pitch must be nonnegative")


def sample_poses(
    reference: Pose, ranges: PoseRanges, n: int, seed: int
) -> list[Pose]:
    """Draw ``n`` camera poses jittered around ``reference``.

    The first returned pose is the reference itself.  Subsequent poses
    rotate the camera by yaw (about its y axis) then pitch (about x) and
    displace its center by a per-axis uniform offset expressed in the
    reference camera's frame.  Fully determined by ``seed``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    out = [Pose(reference.R.copy(), reference.t.copy())]
    mt = np.asarray(ranges.max_translation, dtype=np.float64)
    C_ref = reference.center
    for _ in range(n - 1):
        u = rng.uniform(-1.0, 1.0, size=5)
        yaw = u[0] * ranges.max_yaw
        pitch = u[1] * ranges.max_pitch
        delta = u[2:5] * mt  # offset in the reference camera frame
        A = rot_y(yaw) @ rot_x(pitch)  # new camera axes in the old camera frame
        R_new = A.T @ reference.R
        C_new = C_ref + reference.R.T @ delta
        out.append(Pose(R_new, -R_new @ C_new))
    return out
