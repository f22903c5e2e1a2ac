"""Image quality metrics: PSNR, single-scale SSIM on luma, masked depth L1."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LUMA_WEIGHTS",
    "MetricReport",
    "ViewMetrics",
    "depth_l1",
    "gaussian_window",
    "luma",
    "masked_psnr",
    "masked_ssim",
    "psnr",
    "ssim",
]

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def luma(image: np.ndarray) -> np.ndarray:
    """Rec. 601 luma of an (H, W, 3) image; (H, W) inputs pass through."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[-1] == 3:
        return img @ LUMA_WEIGHTS
    raise ValueError(f"expected (H, W) or (H, W, 3) image, got shape {img.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio for [0, 1] images, capped at 99 dB.

    Identical inputs return the 99 dB sentinel rather than infinity.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """1-D Gaussian window normalized to unit sum."""
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def _corr1d_valid(a: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(a, len(k), axis=axis)
    return win @ k


def sep_correlate_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Valid-mode correlation with the separable kernel k (x) k."""
    return _corr1d_valid(_corr1d_valid(img, k, 0), k, 1)


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-window SSIM over luma with an 11x11 Gaussian (sigma 1.5).

    Returns the valid-window map of shape (H - 10, W - 10).
    """
    x = luma(a)
    y = luma(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ValueError(
            f"images of shape {x.shape} are smaller than the "
            f"{SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    k = gaussian_window()
    mu_x = sep_correlate_valid(x, k)
    mu_y = sep_correlate_valid(y, k)
    sig_xx = sep_correlate_valid(x * x, k) - mu_x * mu_x
    sig_yy = sep_correlate_valid(y * y, k) - mu_y * mu_y
    sig_xy = sep_correlate_valid(x * y, k) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * sig_xy + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (sig_xx + sig_yy + SSIM_C2)
    return num / den


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM between two images (luma, 11x11 Gaussian window)."""
    return float(np.mean(ssim_map(a, b)))


def masked_psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    """PSNR restricted to pixels where the boolean (H, W) mask is true."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if a.shape != b.shape or mask.shape != a.shape[:2]:
        raise ValueError(
            f"shape mismatch: {a.shape}, {b.shape}, mask {mask.shape}"
        )
    if not mask.any():
        raise ValueError("masked_psnr mask selects no pixels")
    mse = float(np.mean((a[mask] - b[mask]) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def masked_ssim(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    """Mean SSIM over windows whose 11x11 support lies inside the mask."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != np.asarray(a).shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image")
    win = np.lib.stride_tricks.sliding_window_view(
        mask, (SSIM_WINDOW, SSIM_WINDOW)
    ).all(axis=(-1, -2))
    if not win.any():
        raise ValueError("mask admits no complete SSIM window")
    return float(np.mean(ssim_map(a, b)[win]))


def depth_l1(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    """Mean absolute depth difference over a boolean mask."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if a.shape != b.shape or mask.shape != a.shape:
        raise ValueError(
            f"shape mismatch: {a.shape}, {b.shape}, mask {mask.shape}"
        )
    if not mask.any():
        raise ValueError("depth_l1 mask selects no pixels")
    return float(np.mean(np.abs(a[mask] - b[mask])))


@dataclass
class ViewMetrics:
    name: str
    psnr: float
    ssim: float
    depth_l1: float | None = None

    def to_dict(self) -> dict:
        d = {"name": self.name, "psnr": self.psnr, "ssim": self.ssim}
        if self.depth_l1 is not None:
            d["depth_l1"] = self.depth_l1
        return d


@dataclass
class MetricReport:
    per_view: list[ViewMetrics] = field(default_factory=list)

    def mean(self) -> dict:
        if not self.per_view:
            return {}
        out = {
            "psnr": float(np.mean([v.psnr for v in self.per_view])),
            "ssim": float(np.mean([v.ssim for v in self.per_view])),
        }
        depths = [v.depth_l1 for v in self.per_view if v.depth_l1 is not None]
        if depths:
            out["depth_l1"] = float(np.mean(depths))
        return out

    def to_dict(self) -> dict:
        return {"per_view": [v.to_dict() for v in self.per_view], "mean": self.mean()}
