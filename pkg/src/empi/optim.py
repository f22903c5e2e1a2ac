"""Gradient-based fitting of MPI texels and filter weights.

The forward chain per view is gather (bilinear plane resampling with
precomputed maps), front-to-back compositing, the optional edge-aware
filter, then an L1 (optionally L1 + DSSIM) loss against the pseudo-view
target.  Every adjoint is written by hand and checked against central
finite differences by gradcheck.

The compositing adjoint uses a back-to-front "rest" recurrence
(rest_k = alpha_{k+1} c_{k+1} + (1 - alpha_{k+1}) rest_{k+1}) so that
d(loss)/d(alpha_k) = T_k (c_k - rest_k) never divides by 1 - alpha, which
underflows to zero for near-opaque seeded texels.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraModel, ExpansionSpec, Pose, rot_y
from .metrics import (
    LUMA_WEIGHTS,
    SSIM_C1,
    SSIM_C2,
    SSIM_WINDOW,
    gaussian_window,
    psnr,
    sep_correlate_valid,
)
from .mpi import BilateralKernel, GatherMap, MpiVolume, reflect_index, view_gather_maps
from .pseudo import PseudoView

__all__ = [
    "DivergenceError",
    "GradCheckReport",
    "GradientBuffer",
    "OptimizeConfig",
    "OptimizeResult",
    "TraceRow",
    "backward",
    "gradcheck",
    "mpi_loss",
    "optimize",
    "write_loss_trace",
]

_LOSS_MODES = ("l1", "l1_plus_dssim")
_PRECISIONS = {"f32": np.float32, "f64": np.float64}


@dataclass
class OptimizeConfig:
    iters: int = 500
    step_size: float = 0.05
    batch: int = 4
    loss_mode: str = "l1"
    dssim_weight: float = 0.0
    filter_enabled: bool = True
    deterministic: bool = True
    seed: int = 0
    precision: str = "f64"
    momentum: float = 0.9

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError(f"iters must be >= 1, got {self.iters}")
        if not (self.step_size > 0):
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if self.loss_mode not in _LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {_LOSS_MODES}, got {self.loss_mode!r}")
        if self.dssim_weight < 0:
            raise ValueError(f"dssim_weight must be >= 0, got {self.dssim_weight}")
        if self.precision not in _PRECISIONS:
            raise ValueError(f"precision must be 'f32' or 'f64', got {self.precision!r}")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")

    @property
    def dtype(self):
        return _PRECISIONS[self.precision]


@dataclass
class GradientBuffer:
    """d(loss)/d(parameters): texel grads plus optional filter-weight grads."""

    texels: np.ndarray
    filter_weights: np.ndarray | None = None

    @classmethod
    def zeros(cls, texel_shape, kernel_size: int | None, dtype) -> "GradientBuffer":
        fw = None if kernel_size is None else np.zeros((kernel_size, kernel_size), dtype)
        return cls(texels=np.zeros(texel_shape, dtype), filter_weights=fw)

    def add_(self, other: "GradientBuffer") -> "GradientBuffer":
        self.texels += other.texels
        if self.filter_weights is not None and other.filter_weights is not None:
            self.filter_weights += other.filter_weights
        return self

    def scale_(self, s: float) -> "GradientBuffer":
        self.texels *= s
        if self.filter_weights is not None:
            self.filter_weights *= s
        return self


@dataclass
class TraceRow:
    step: int
    loss: float
    psnr_ref: float


class DivergenceError(RuntimeError):
    """Optimization hit a non-finite loss; carries a diagnostic snapshot."""

    def __init__(self, step: int, snapshot: dict):
        super().__init__(f"non-finite loss at step {step}: {snapshot}")
        self.step = step
        self.snapshot = snapshot


def write_loss_trace(path, trace: list[TraceRow]) -> None:
    """Emit the per-step trace as CSV with columns step,loss,psnr_ref."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "loss", "psnr_ref"])
        for row in trace:
            w.writerow([row.step, f"{row.loss:.17g}", f"{row.psnr_ref:.17g}"])


# -- loss -------------------------------------------------------------------


def mpi_loss(
    rendered: np.ndarray, target, mode: str = "l1", dssim_weight: float = 0.0
) -> float:
    """Scalar fitting loss: mean |diff|, optionally + dssim_weight*(1-SSIM)/2."""
    tgt = np.asarray(getattr(target, "rgb", target), dtype=np.float64)
    rnd = np.asarray(rendered, dtype=np.float64)
    if rnd.shape != tgt.shape:
        raise ValueError(f"shape mismatch: rendered {rnd.shape} vs target {tgt.shape}")
    if mode not in _LOSS_MODES:
        raise ValueError(f"mode must be one of {_LOSS_MODES}, got {mode!r}")
    loss = float(np.mean(np.abs(rnd - tgt), dtype=np.float64))
    if mode == "l1_plus_dssim":
        s, _ = _ssim_value_and_grad(rnd, tgt, want_grad=False)
        loss += dssim_weight * (1.0 - s) / 2.0
    return loss


def _l1_value_and_grad(rendered, target):
    diff = rendered - target
    loss = float(np.mean(np.abs(diff), dtype=np.float64))
    return loss, np.sign(diff) / diff.size


def _ssim_transpose(m: np.ndarray, k: np.ndarray) -> np.ndarray:
    # Adjoint of valid correlation with the symmetric separable window:
    # zero-pad by window-1 on every side, then valid-correlate again.
    return sep_correlate_valid(np.pad(m, SSIM_WINDOW - 1), k)


def _ssim_value_and_grad(rendered, target, want_grad=True):
    """Mean luma SSIM and its gradient wrt the rendered rgb image."""
    x = rendered @ LUMA_WEIGHTS
    y = target @ LUMA_WEIGHTS
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ValueError(
            f"image {x.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    k = gaussian_window()
    mu_x = sep_correlate_valid(x, k)
    mu_y = sep_correlate_valid(y, k)
    sxx = sep_correlate_valid(x * x, k) - mu_x * mu_x
    syy = sep_correlate_valid(y * y, k) - mu_y * mu_y
    sxy = sep_correlate_valid(x * y, k) - mu_x * mu_y
    A = 2.0 * mu_x * mu_y + SSIM_C1
    B = 2.0 * sxy + SSIM_C2
    C = mu_x * mu_x + mu_y * mu_y + SSIM_C1
    D = sxx + syy + SSIM_C2
    s = (A * B) / (C * D)
    value = float(np.mean(s, dtype=np.float64))
    if not want_grad:
        return value, None

    # d(mean s)/d(window stats); raw-moment chain: Sxx = corr(x^2),
    # Sxy = corr(x y) with the mu-dependence of the central moments folded
    # into d/d(mu_x).
    g_map = np.full_like(s, 1.0 / s.size)
    inv_cd = 1.0 / (C * D)
    g_mu = g_map * (2.0 * mu_y * (B - A) * inv_cd - 2.0 * mu_x * s * (1.0 / C - 1.0 / D))
    g_sxy_raw = g_map * 2.0 * A * inv_cd
    g_sxx_raw = g_map * (-s / D)
    gx = (
        _ssim_transpose(g_mu, k)
        + 2.0 * x * _ssim_transpose(g_sxx_raw, k)
        + y * _ssim_transpose(g_sxy_raw, k)
    )
    return value, gx[..., None] * LUMA_WEIGHTS


def _loss_value_and_grad(rendered, target, cfg: OptimizeConfig):
    loss, g = _l1_value_and_grad(rendered, target)
    if cfg.loss_mode == "l1_plus_dssim":
        s, gs = _ssim_value_and_grad(
            np.asarray(rendered, np.float64), np.asarray(target, np.float64)
        )
        loss += cfg.dssim_weight * (1.0 - s) / 2.0
        g = g + (-cfg.dssim_weight / 2.0) * gs
    return loss, g.astype(rendered.dtype, copy=False)


# -- plane gather and its transpose ------------------------------------------


@dataclass
class _PlaneMap:
    """Flattened bilinear gather: 4 corner indices and weights per output px."""

    idx: np.ndarray  # (4, n) int64 into the flat H*W plane
    w: np.ndarray  # (4, n) corner weights, zeroed where invalid

    @classmethod
    def from_gather(cls, gm: GatherMap, dtype) -> "_PlaneMap":
        in_h, in_w = gm.in_shape
        base = (gm.iy0 * in_w + gm.ix0).ravel()
        idx = np.stack([base, base + 1, base + in_w, base + in_w + 1])
        w = np.stack([c.ravel() for c in gm.corner_weights()]).astype(dtype)
        w *= gm.valid.ravel()
        return cls(idx=idx, w=w)

    def gather(self, plane_flat: np.ndarray) -> np.ndarray:
        """plane_flat (H*W, 4) -> (n, 4) sampled texels."""
        return np.einsum("cn,cnk->nk", self.w, plane_flat[self.idx])

    def scatter(self, grad: np.ndarray, plane_size: int) -> np.ndarray:
        """Transpose of gather: grad (n, 4) -> (H*W, 4) accumulated."""
        out = np.zeros(plane_size * 4)
        lanes = np.arange(4)
        for c in range(4):
            flat_idx = (self.idx[c][:, None] * 4 + lanes).ravel()
            vals = (self.w[c][:, None] * grad).ravel()
            out += np.bincount(flat_idx, weights=vals, minlength=plane_size * 4)
        return out.reshape(plane_size, 4)


# -- filter forward/backward in optimizer precision ---------------------------


def _filter_forward(img: np.ndarray, kernel: BilateralKernel):
    """Difference-form edge-aware filter returning (out, norm, luma).

    Mirrors bilateral_filter exactly (same op order) but keeps the
    normalization map and luma for the backward pass and runs in the input
    dtype.
    """
    h, w = img.shape[:2]
    half = kernel.size // 2
    lam = LUMA_WEIGHTS.astype(img.dtype)
    Y = img @ lam
    inv_two_sr2 = 1.0 / (2.0 * kernel.sigma_r**2)
    weights = kernel.spatial_weights.astype(img.dtype)
    acc_w = np.zeros((h, w), img.dtype)
    acc_d = np.zeros_like(img)
    for dy in range(-half, half + 1):
        ry = reflect_index(np.arange(h) + dy, h)
        for dx in range(-half, half + 1):
            rx = reflect_index(np.arange(w) + dx, w)
            Yq = Y[np.ix_(ry, rx)]
            r = np.exp(-((Y - Yq) ** 2) * inv_two_sr2)
            wmap = weights[dy + half, dx + half] * r
            acc_w += wmap
            if dy == 0 and dx == 0:
                continue
            acc_d += wmap[..., None] * (img[np.ix_(ry, rx)] - img)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = img + acc_d / acc_w[..., None]
    return out, acc_w, Y


def _filter_backward(img, kernel: BilateralKernel, out, acc_w, Y, g_out):
    """Adjoint of _filter_forward.

    Returns (d(loss)/d(img), d(loss)/d(spatial_weights)).  Range weights
    depend on the input through luma, so gradients flow both through the
    direct color taps and through the weight maps.
    """
    h, w = img.shape[:2]
    half = kernel.size // 2
    dtype = img.dtype
    lam = LUMA_WEIGHTS.astype(dtype)
    inv_two_sr2 = 1.0 / (2.0 * kernel.sigma_r**2)
    weights = kernel.spatial_weights.astype(dtype)

    g_img = g_out.copy()  # identity path of the difference form
    g_Y = np.zeros((h, w), dtype)
    g_weights = np.zeros_like(kernel.spatial_weights)
    inv_w = 1.0 / acc_w
    coeff = g_out * inv_w[..., None]  # d(loss)/d(numerator term), per channel
    # d(loss)/d(acc_w) via out = img + num / acc_w
    g_norm = -(g_out * (out - img)).sum(-1) * inv_w

    for dy in range(-half, half + 1):
        ry = reflect_index(np.arange(h) + dy, h)
        for dx in range(-half, half + 1):
            rx = reflect_index(np.arange(w) + dx, w)
            qy = ry[:, None]
            qx = rx[None, :]
            Yq = Y[np.ix_(ry, rx)]
            delta = Y - Yq
            r = np.exp(-(delta**2) * inv_two_sr2)
            g_s = weights[dy + half, dx + half]
            if dy == 0 and dx == 0:
                g_weights[half, half] += float(np.sum(g_norm * r, dtype=np.float64))
                # delta is identically zero: no luma path from the center tap
                continue
            diff = img[np.ix_(ry, rx)] - img
            g_weights[dy + half, dx + half] += float(
                np.sum(coeff * (r[..., None] * diff), dtype=np.float64)
            ) + float(np.sum(g_norm * r, dtype=np.float64))
            g_r = (coeff * diff).sum(-1) * g_s + g_norm * g_s
            # color taps of the numerator
            wmap = (g_s * r)[..., None]
            g_img -= coeff * wmap
            np.add.at(g_img, (qy, qx), coeff * wmap)
            # range-kernel luma paths
            g_delta = g_r * r * (-delta) * (2.0 * inv_two_sr2)
            g_Y += g_delta
            np.add.at(g_Y, (qy, qx), -g_delta)
    g_img += g_Y[..., None] * lam
    return g_img, g_weights


# -- composite backward -------------------------------------------------------


def _composite_forward(warped: np.ndarray, deltas: np.ndarray):
    """warped (P, h, w, 4) near-to-far -> (rgb, alpha, trans)."""
    alpha = 1.0 - np.exp(-warped[..., 3] * deltas[:, None, None])
    trans = np.ones_like(alpha)
    np.cumprod(1.0 - alpha[:-1], axis=0, out=trans[1:])
    rgb = np.einsum("phw,phwc->hwc", trans * alpha, warped[..., :3])
    return rgb, alpha, trans


def _composite_backward(warped, alpha, trans, deltas, g_rgb):
    """Adjoint of _composite_forward; returns (P, h, w, 4) gradients."""
    P = warped.shape[0]
    g_warped = np.empty_like(warped)
    rest = np.zeros(warped.shape[1:3] + (3,), warped.dtype)
    for k in range(P - 1, -1, -1):
        ta = (trans[k] * alpha[k])[..., None]
        g_warped[k, ..., :3] = g_rgb * ta
        g_alpha = (g_rgb * (warped[k, ..., :3] - rest)).sum(-1) * trans[k]
        g_warped[k, ..., 3] = g_alpha * deltas[k] * (1.0 - alpha[k])
        rest = alpha[k][..., None] * warped[k, ..., :3] + (1.0 - alpha[k][..., None]) * rest
    return g_warped


# -- per-view pipeline --------------------------------------------------------


@dataclass
class _ViewPipe:
    maps: list[_PlaneMap]
    target: np.ndarray  # (h, w, 3) in optimizer dtype
    shape: tuple[int, int]


def _build_pipe(mpi: MpiVolume, view: PseudoView, dtype) -> _ViewPipe:
    maps = [
        _PlaneMap.from_gather(gm, dtype)
        for gm in view_gather_maps(mpi, mpi.reference, view.pose)
    ]
    return _ViewPipe(
        maps=maps,
        target=np.asarray(view.rgb, dtype=dtype),
        shape=(mpi.reference.height, mpi.reference.width),
    )


def _forward_pipe(texels, pipe: _ViewPipe, deltas, kernel, cfg: OptimizeConfig):
    P = texels.shape[0]
    h, w = pipe.shape
    flat = texels.reshape(P, -1, 4)
    warped = np.empty((P, h, w, 4), texels.dtype)
    for k in range(P):
        warped[k] = pipe.maps[k].gather(flat[k]).reshape(h, w, 4)
    rgb, alpha, trans = _composite_forward(warped, deltas)
    if cfg.filter_enabled:
        out, acc_w, Y = _filter_forward(rgb, kernel)
    else:
        out, acc_w, Y = rgb, None, None
    loss, g_out = _loss_value_and_grad(out, pipe.target, cfg)
    cache = dict(
        warped=warped, rgb=rgb, alpha=alpha, trans=trans, out=out,
        acc_w=acc_w, Y=Y, g_out=g_out,
    )
    return loss, cache


def _backward_pipe(texels, pipe: _ViewPipe, deltas, kernel, cfg, cache) -> GradientBuffer:
    P = texels.shape[0]
    plane_size = texels.shape[1] * texels.shape[2]
    if cfg.filter_enabled:
        g_rgb, g_weights = _filter_backward(
            cache["rgb"], kernel, cache["out"], cache["acc_w"], cache["Y"], cache["g_out"]
        )
    else:
        g_rgb, g_weights = cache["g_out"], None
    g_warped = _composite_backward(
        cache["warped"], cache["alpha"], cache["trans"], deltas, g_rgb
    )
    buf = GradientBuffer.zeros(texels.shape, kernel.size if g_weights is not None else None, cfg.dtype)
    for k in range(P):
        buf.texels[k] = (
            pipe.maps[k].scatter(g_warped[k].reshape(-1, 4), plane_size)
            .reshape(texels.shape[1:])
            .astype(cfg.dtype)
        )
    if g_weights is not None:
        buf.filter_weights = g_weights.astype(cfg.dtype)
    return buf


def _deltas_for(mpi: MpiVolume, dtype) -> np.ndarray:
    return mpi.plane_deltas().astype(dtype)


def backward(
    mpi: MpiVolume,
    kernel: BilateralKernel | None,
    view: PseudoView,
    config: OptimizeConfig,
) -> GradientBuffer:
    """Gradient of mpi_loss for one view wrt texels and filter weights.

    Frozen texels (per mpi.freeze) get exactly zero gradient.
    """
    if config.filter_enabled and kernel is None:
        raise ValueError("filter_enabled requires a kernel")
    dtype = config.dtype
    texels = mpi.texels.astype(dtype)
    pipe = _build_pipe(mpi, view, dtype)
    deltas = _deltas_for(mpi, dtype)
    _, cache = _forward_pipe(texels, pipe, deltas, kernel, config)
    buf = _backward_pipe(texels, pipe, deltas, kernel, config, cache)
    if mpi.freeze is not None:
        buf.texels[mpi.freeze] = 0
    return buf


# -- descent loop -------------------------------------------------------------


@dataclass
class OptimizeResult:
    volume: MpiVolume
    kernel: BilateralKernel | None
    trace: list[TraceRow] = field(default_factory=list)


def _snapshot(step, loss, texels, kernel, grads: GradientBuffer | None) -> dict:
    snap = {
        "step": step,
        "loss": float(loss),
        "texel_min": float(np.min(texels)),
        "texel_max": float(np.max(texels)),
        "sigma_max": float(np.max(texels[..., 3])),
    }
    if kernel is not None:
        snap["filter_weight_absmax"] = float(np.max(np.abs(kernel.spatial_weights)))
    if grads is not None:
        snap["grad_absmax"] = float(np.max(np.abs(grads.texels)))
    return snap


def optimize(
    mpi: MpiVolume,
    views: list[PseudoView],
    config: OptimizeConfig,
    kernel: BilateralKernel | None = None,
    freeze: np.ndarray | None = None,
) -> OptimizeResult:
    """Momentum descent on texels (and filter weights) against pseudo views.

    Each step samples config.batch views without replacement, averages
    their gradients, applies v = momentum*v + g, theta -= step_size*v, then
    projects rgb to [0,1] and sigma to >= 0.  Texels under the freeze mask
    (defaults to mpi.freeze) receive zero gradient and are bitwise
    preserved.  The trace records loss and reference-view PSNR per step.
    Raises DivergenceError with a diagnostic snapshot on non-finite loss.
    """
    if not views:
        raise ValueError("views must be nonempty")
    if freeze is None:
        freeze = mpi.freeze
    dtype = config.dtype
    if config.filter_enabled and kernel is None:
        kernel = BilateralKernel.create()
    kernel_out = kernel.copy() if kernel is not None else None
    if kernel_out is not None:
        kernel_out.spatial_weights = kernel_out.spatial_weights.astype(dtype)

    texels = mpi.texels.astype(dtype)
    deltas = _deltas_for(mpi, dtype)
    pipes = [_build_pipe(mpi, v, dtype) for v in views]
    n = len(pipes)
    batch = min(config.batch, n)
    rng = np.random.default_rng(config.seed)

    v_tex = np.zeros_like(texels)
    v_ker = (
        np.zeros_like(kernel_out.spatial_weights)
        if (kernel_out is not None and config.filter_enabled)
        else None
    )
    trace: list[TraceRow] = []
    for step in range(1, config.iters + 1):
        if batch == n:
            chosen = range(n)
        else:
            chosen = np.sort(rng.choice(n, size=batch, replace=False))
        total = GradientBuffer.zeros(
            texels.shape, kernel_out.size if v_ker is not None else None, dtype
        )
        loss_sum = 0.0
        for i in chosen:
            loss_i, cache = _forward_pipe(texels, pipes[i], deltas, kernel_out, config)
            loss_sum += loss_i
            total.add_(_backward_pipe(texels, pipes[i], deltas, kernel_out, config, cache))
        loss = loss_sum / batch
        if not np.isfinite(loss):
            raise DivergenceError(step, _snapshot(step, loss, texels, kernel_out, total))
        total.scale_(1.0 / batch)
        if freeze is not None:
            total.texels[freeze] = 0

        v_tex *= config.momentum
        v_tex += total.texels
        texels -= config.step_size * v_tex
        np.clip(texels[..., :3], 0.0, 1.0, out=texels[..., :3])
        np.maximum(texels[..., 3], 0.0, out=texels[..., 3])
        if v_ker is not None:
            v_ker *= config.momentum
            v_ker += total.filter_weights
            kernel_out.spatial_weights -= config.step_size * v_ker

        ref_loss, ref_cache = _forward_pipe(texels, pipes[0], deltas, kernel_out, config)
        trace.append(
            TraceRow(
                step=step,
                loss=float(loss),
                psnr_ref=psnr(
                    np.clip(np.asarray(ref_cache["out"], np.float64), 0.0, 1.0),
                    np.asarray(pipes[0].target, np.float64),
                ),
            )
        )

    out_vol = MpiVolume(
        texels=texels,
        plane_depths=mpi.plane_depths.copy(),
        delta=mpi.delta,
        reference=mpi.reference,
        expansion=mpi.expansion,
        freeze=None if freeze is None else freeze.copy(),
        spacing=mpi.spacing,
    )
    return OptimizeResult(volume=out_vol, kernel=kernel_out, trace=trace)


# -- finite-difference verification -------------------------------------------


@dataclass
class GradCheckEntry:
    param: str
    analytic: float
    fd: float
    abs_err: float
    rel_err: float

    def to_dict(self) -> dict:
        return {
            "param": self.param,
            "analytic": self.analytic,
            "fd": self.fd,
            "abs_err": self.abs_err,
            "rel_err": self.rel_err,
        }


@dataclass
class GradCheckReport:
    precision: str
    tolerance: float
    step: float
    max_abs_err: float
    max_rel_err: float
    passed: bool
    entries: list[GradCheckEntry] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "tolerance": self.tolerance,
            "step": self.step,
            "max_abs_err": self.max_abs_err,
            "max_rel_err": self.max_rel_err,
            "passed": self.passed,
            "entries": [e.to_dict() for e in self.entries],
        }


def _gradcheck_scene(planes, height, width, rng, dtype):
    cam = CameraModel(
        fx=0.75 * width, fy=0.75 * width, cx=(width - 1) / 2, cy=(height - 1) / 2,
        width=width, height=height,
    )
    expansion = ExpansionSpec.from_factor(*cam.long_border(), 1.25)
    H = int(np.ceil(expansion.a * height))
    W = int(np.ceil(expansion.a * width))
    texels = np.empty((planes, H, W, 4), dtype)
    texels[..., :3] = rng.uniform(0.05, 0.95, (planes, H, W, 3))
    texels[..., 3] = rng.uniform(0.2, 2.0, (planes, H, W))
    depths = 2.0 + 0.75 * np.arange(planes)
    vol = MpiVolume(
        texels=texels, plane_depths=depths, delta=0.75, reference=cam,
        expansion=expansion,
    )
    pose = Pose(rot_y(0.05), np.array([0.07, -0.05, 0.02]))
    return vol, pose


def gradcheck(
    planes: int = 4,
    height: int = 16,
    width: int = 16,
    seed: int = 0,
    precision: str = "f64",
    loss_mode: str = "l1",
    dssim_weight: float = 0.0,
    filter_enabled: bool = True,
    probes: int = 200,
) -> GradCheckReport:
    """Compare the analytic adjoints against central finite differences.

    Probes `probes` random texel parameters plus every filter weight on a
    small random scene.  Tolerance is 1e-3 in f64; f32 forward passes carry
    more rounding, so the tolerance degrades to 1e-2 with a larger probe
    step.  Sigma is initialized away from 0 and the target is offset from
    the render by at least 0.1 so no probe crosses a clamp or |x| kink.
    """
    if planes > 8 or height > 32 or width > 32:
        raise ValueError("gradcheck dims capped at 8 planes and 32x32 output")
    cfg = OptimizeConfig(
        loss_mode=loss_mode, dssim_weight=dssim_weight,
        filter_enabled=filter_enabled, precision=precision,
    )
    dtype = cfg.dtype
    h_step = 1e-4 if precision == "f64" else 1e-2
    tol = 1e-3 if precision == "f64" else 1e-2
    abs_floor = 1e-7 if precision == "f64" else 1e-5
    rng = np.random.default_rng(seed)

    vol, pose = _gradcheck_scene(planes, height, width, rng, dtype)
    kernel = BilateralKernel.create() if filter_enabled else None
    texels = vol.texels.astype(dtype)
    deltas = _deltas_for(vol, dtype)

    maps = [
        _PlaneMap.from_gather(gm, dtype)
        for gm in view_gather_maps(vol, vol.reference, pose)
    ]
    pipe = _ViewPipe(maps=maps, target=np.zeros((height, width, 3), dtype),
                     shape=(height, width))
    base_loss, cache0 = _forward_pipe(texels, pipe, deltas, kernel, cfg)
    offs = rng.uniform(0.1, 0.3, cache0["out"].shape) * rng.choice(
        [-1.0, 1.0], cache0["out"].shape
    )
    pipe.target = (np.asarray(cache0["out"], np.float64) + offs).astype(dtype)

    _, cache = _forward_pipe(texels, pipe, deltas, kernel, cfg)
    buf = _backward_pipe(texels, pipe, deltas, kernel, cfg, cache)

    def loss_at(t, kern):
        val, _ = _forward_pipe(t, pipe, deltas, kern, cfg)
        return val

    entries = []
    P, Hh, Ww, _ = texels.shape
    flat_choices = rng.choice(P * Hh * Ww * 4, size=min(probes, P * Hh * Ww * 4),
                              replace=False)
    for flat in flat_choices:
        k, rem = divmod(int(flat), Hh * Ww * 4)
        y, rem = divmod(rem, Ww * 4)
        x, c = divmod(rem, 4)
        t_hi = texels.copy()
        t_hi[k, y, x, c] += h_step
        t_lo = texels.copy()
        t_lo[k, y, x, c] -= h_step
        fd = (loss_at(t_hi, kernel) - loss_at(t_lo, kernel)) / (2 * h_step)
        a = float(buf.texels[k, y, x, c])
        abs_err = abs(a - fd)
        rel_err = abs_err / max(abs(a), abs(fd), abs_floor)
        entries.append(GradCheckEntry(f"texel[{k},{y},{x},{c}]", a, fd, abs_err, rel_err))
    if filter_enabled:
        K = kernel.size
        for i in range(K):
            for j in range(K):
                k_hi = kernel.copy()
                k_hi.spatial_weights[i, j] += h_step
                k_lo = kernel.copy()
                k_lo.spatial_weights[i, j] -= h_step
                fd = (loss_at(texels, k_hi) - loss_at(texels, k_lo)) / (2 * h_step)
                a = float(buf.filter_weights[i, j])
                abs_err = abs(a - fd)
                rel_err = abs_err / max(abs(a), abs(fd), abs_floor)
                entries.append(GradCheckEntry(f"filter[{i},{j}]", a, fd, abs_err, rel_err))

    max_abs = max(e.abs_err for e in entries)
    max_rel = max(e.rel_err for e in entries)
    return GradCheckReport(
        precision=precision, tolerance=tol, step=h_step,
        max_abs_err=max_abs, max_rel_err=max_rel,
        passed=bool(max_rel < tol), entries=entries,
    )
