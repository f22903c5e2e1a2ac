"""On-disk formats: rasters, depth maps, the MPI container, web export.

Everything here is endianness-pinned (little-endian) and writes atomically:
payloads are staged to a temp file in the destination directory and moved
into place with os.replace, so a crash never leaves a half-written file
under the final name.

Formats
-------
RGB          8- or 16-bit PNG, values are [0, 1] floats in memory.
Depth        "DPTH": magic, version u32, width u32, height u32, then
             float32 row-major samples.  Bitwise round trip.
             Alternatively 16-bit PNG plus a JSON sidecar {d_min, d_max},
             quantized to (d_max - d_min) / 65535.
MpiContainer "EMPI": header (version, P/H/W, reference intrinsics, source
             size, expansion factor, depth range), float32 plane depths,
             float32 texels plane-major, then an optional "FRZM" chunk
             holding the freeze mask as packed row-major bits.
WebBundle    manifest.json plus plane_%04d.png, 8-bit RGBA near-to-far with
             straight (non-premultiplied) alpha = 1 - exp(-sigma * delta),
             so sigma is recoverable as -ln(1 - alpha) / delta up to 8-bit
             quantization.  The manifest camera is the expanded camera
             (principal point already shifted onto the texel grid).
Views        directory of view_%03d.png (16-bit), view_%03d.dpth,
             view_%03d.pose.json, mask_%03d.png; each pose file is a valid
             trajectory entry so external tools can round trip poses.
Trajectory   JSON array of {R: 9 floats row-major, t: 3 floats, fx, fy,
             cx, cy, width, height}; floats serialized with 17 significant
             digits, which round-trips doubles exactly.
"""

from __future__ import annotations

import json
import math
import os
import struct
from pathlib import Path

import cv2
import numpy as np

from .camera import CameraModel, ExpansionSpec
from .mpi import MpiVolume
from .pseudo import PseudoBundle, PseudoView
from .warp import DepthRaster

__all__ = [
    "FormatError",
    "camera_entry",
    "entry_camera",
    "export_web",
    "load_mpi",
    "load_views",
    "load_web_bundle",
    "read_depth",
    "read_depth_png16",
    "read_mask",
    "read_rgb",
    "read_trajectory",
    "save_mpi",
    "save_views",
    "write_depth",
    "write_depth_png16",
    "write_mask",
    "write_rgb",
    "write_trajectory",
]


class FormatError(ValueError):
    """A file failed to parse; the message names the file, field, and offset."""


# -- atomic write helpers --------------------------------------------------


def _atomic_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _atomic_text(path, text: str) -> None:
    _atomic_bytes(path, text.encode("utf-8"))


def _encode_png(arr: np.ndarray) -> bytes:
    ok, buf = cv2.imencode(".png", np.ascontiguousarray(arr))
    if not ok:
        raise ValueError(f"PNG encoding failed for array {arr.shape} {arr.dtype}")
    return buf.tobytes()


def _decode_png(path) -> np.ndarray:
    raw = np.fromfile(str(path), dtype=np.uint8)
    img = cv2.imdecode(raw, cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FormatError(f"{path}: not a decodable image")
    return img


def _f17(v: float) -> str:
    return format(float(v), ".17g")


# -- RGB and mask rasters --------------------------------------------------


def write_rgb(path, img: np.ndarray, bits: int = 8) -> None:
    """Write an (h, w, 3) float image in [0, 1] as an 8- or 16-bit PNG."""
    if bits not in (8, 16):
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"rgb image must be (h, w, 3), got {img.shape}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("rgb values must lie in [0, 1]")
    scale = 255 if bits == 8 else 65535
    dtype = np.uint8 if bits == 8 else np.uint16
    q = np.rint(img * scale).astype(dtype)
    _atomic_bytes(path, _encode_png(q[:, :, ::-1]))  # cv2 wants BGR


def read_rgb(path) -> np.ndarray:
    """Read an 8- or 16-bit color PNG into an (h, w, 3) float64 in [0, 1]."""
    img = _decode_png(path)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(
            f"{path}: expected a 3-channel image, got shape {img.shape}"
        )
    scale = 255.0 if img.dtype == np.uint8 else 65535.0
    return img[:, :, ::-1].astype(np.float64) / scale


def write_mask(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    _atomic_bytes(path, _encode_png(np.where(mask, 255, 0).astype(np.uint8)))


def read_mask(path) -> np.ndarray:
    img = _decode_png(path)
    if img.ndim != 2:
        raise FormatError(f"{path}: expected a single-channel mask, got {img.shape}")
    return img > 127


# -- DPTH binary depth -----------------------------------------------------

_DPTH_MAGIC = b"DPTH"
_DPTH_VERSION = 1
_DPTH_HEADER = 16  # magic + version + width + height


def write_depth(path, depth) -> None:
    """Write a depth map as DPTH: float32 little-endian, bitwise stable."""
    data = depth.data if isinstance(depth, DepthRaster) else np.asarray(depth)
    data = np.asarray(data, dtype="<f4")
    if data.ndim != 2:
        raise ValueError(f"depth must be 2-D, got shape {data.shape}")
    h, w = data.shape
    header = _DPTH_MAGIC + struct.pack("<III", _DPTH_VERSION, w, h)
    _atomic_bytes(path, header + np.ascontiguousarray(data).tobytes())


def read_depth(path) -> DepthRaster:
    raw = Path(path).read_bytes()
    if len(raw) < _DPTH_HEADER:
        raise FormatError(
            f"{path}: truncated header, expected {_DPTH_HEADER} bytes, got {len(raw)}"
        )
    if raw[:4] != _DPTH_MAGIC:
        raise FormatError(
            f"{path}: bad magic {raw[:4]!r} at byte offset 0, expected {_DPTH_MAGIC!r}"
        )
    version, w, h = struct.unpack_from("<III", raw, 4)
    if version != _DPTH_VERSION:
        raise FormatError(
            f"{path}: unsupported DPTH version {version} at byte offset 4, "
            f"expected {_DPTH_VERSION}"
        )
    expected = _DPTH_HEADER + 4 * w * h
    if len(raw) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for a {w}x{h} float32 payload "
            f"at byte offset {_DPTH_HEADER}, got {len(raw)}"
        )
    arr = np.frombuffer(raw, dtype="<f4", offset=_DPTH_HEADER).reshape(h, w).copy()
    return DepthRaster.from_array(arr)


def write_depth_png16(path, depth) -> None:
    """Write depth as a 16-bit PNG plus a {d_min, d_max} JSON sidecar.

    Quantizes to (d_max - d_min) / 65535; the sidecar lives at
    ``<path>.json`` next to the PNG.
    """
    data = depth.data if isinstance(depth, DepthRaster) else np.asarray(depth)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError(f"depth must be 2-D, got shape {data.shape}")
    d_min, d_max = float(data.min()), float(data.max())
    if d_max > d_min:
        q = np.rint((data - d_min) / (d_max - d_min) * 65535.0)
    else:
        q = np.zeros_like(data)
    _atomic_bytes(path, _encode_png(q.astype(np.uint16)))
    _atomic_text(
        Path(str(path) + ".json"),
        f'{{"d_min": {_f17(d_min)}, "d_max": {_f17(d_max)}}}\n',
    )


def read_depth_png16(path) -> DepthRaster:
    sidecar = Path(str(path) + ".json")
    if not sidecar.exists():
        raise FormatError(f"{path}: missing range sidecar {sidecar}")
    side = json.loads(sidecar.read_text())
    for key in ("d_min", "d_max"):
        if key not in side:
            raise FormatError(f"{sidecar}: missing key {key!r}")
    img = _decode_png(path)
    if img.ndim != 2 or img.dtype != np.uint16:
        raise FormatError(
            f"{path}: expected a single-channel 16-bit PNG, got {img.shape} {img.dtype}"
        )
    d_min, d_max = float(side["d_min"]), float(side["d_max"])
    data = d_min + img.astype(np.float64) / 65535.0 * (d_max - d_min)
    return DepthRaster.from_array(data)


# -- EMPI container ----------------------------------------------------------

_EMPI_MAGIC = b"EMPI"
_EMPI_VERSION = 1
_FRZM_MAGIC = b"FRZM"
_EMPI_HEADER = 56


def save_mpi(path, mpi: MpiVolume) -> None:
    """Serialize an MpiVolume; float32 payload, freeze mask as packed bits.

    The reference camera is stored pose-free (the world frame is the
    reference frame).  Plane spacing is not stored explicitly; load_mpi
    re-derives it from the depth list.
    """
    P, H, W = mpi.num_planes, mpi.height, mpi.width
    r = mpi.reference
    parts = [
        _EMPI_MAGIC,
        struct.pack("<IIII", _EMPI_VERSION, P, H, W),
        struct.pack("<ffff", r.fx, r.fy, r.cx, r.cy),
        struct.pack("<II", r.width, r.height),
        struct.pack("<f", mpi.expansion.a),
        struct.pack("<ff", mpi.plane_depths[0], mpi.plane_depths[-1]),
        np.ascontiguousarray(mpi.plane_depths, dtype="<f4").tobytes(),
        np.ascontiguousarray(mpi.texels, dtype="<f4").tobytes(),
    ]
    if mpi.freeze is not None:
        parts.append(_FRZM_MAGIC)
        parts.append(np.packbits(mpi.freeze.reshape(-1)).tobytes())
    _atomic_bytes(path, b"".join(parts))


def _infer_spacing(depths: np.ndarray, d_near: float, d_far: float):
    """Recover (spacing, delta) from a stored depth list.

    The container does not record the spacing mode; whichever family of
    gaps (depth or disparity) is more nearly constant wins, with ties going
    to depth spacing.  delta is recomputed from the stored range endpoints
    so that a second save/load cycle is exactly stable.  Single-plane
    volumes reload with thickness 1.0: the format has no field for it.
    """
    P = len(depths)
    if P == 1:
        return "depth", 1.0
    gaps = np.diff(depths)
    disp_gaps = -np.diff(1.0 / depths)
    d_spread = (gaps.max() - gaps.min()) / gaps.mean()
    i_spread = (disp_gaps.max() - disp_gaps.min()) / disp_gaps.mean()
    if d_spread <= i_spread:
        return "depth", (d_far - d_near) / (P - 1)
    return "disparity", (1.0 / d_near - 1.0 / d_far) / (P - 1)


def load_mpi(path) -> MpiVolume:
    raw = Path(path).read_bytes()
    if len(raw) < _EMPI_HEADER:
        raise FormatError(
            f"{path}: truncated header, expected {_EMPI_HEADER} bytes, got {len(raw)}"
        )
    if raw[:4] != _EMPI_MAGIC:
        raise FormatError(
            f"{path}: bad magic {raw[:4]!r} at byte offset 0, expected {_EMPI_MAGIC!r}"
        )
    version, P, H, W = struct.unpack_from("<IIII", raw, 4)
    if version != _EMPI_VERSION:
        raise FormatError(
            f"{path}: unsupported version {version} at byte offset 4, "
            f"expected {_EMPI_VERSION}"
        )
    if min(P, H, W) < 1:
        raise FormatError(
            f"{path}: plane grid {P}x{H}x{W} at byte offset 8 must be >= 1 per axis"
        )
    fx, fy, cx, cy = struct.unpack_from("<ffff", raw, 20)
    src_w, src_h = struct.unpack_from("<II", raw, 36)
    (a,) = struct.unpack_from("<f", raw, 44)
    d_near, d_far = struct.unpack_from("<ff", raw, 48)

    depths_off = _EMPI_HEADER
    texels_off = depths_off + 4 * P
    base = texels_off + 16 * P * H * W
    frz_len = 4 + (P * H * W + 7) // 8
    if len(raw) not in (base, base + frz_len):
        raise FormatError(
            f"{path}: expected {base} bytes ({base + frz_len} with a freeze "
            f"chunk), got {len(raw)}"
        )

    depths = np.frombuffer(raw, "<f4", count=P, offset=depths_off).astype(np.float64)
    texels = (
        np.frombuffer(raw, "<f4", count=4 * P * H * W, offset=texels_off)
        .reshape(P, H, W, 4)
        .astype(np.float64)
    )
    freeze = None
    if len(raw) == base + frz_len:
        if raw[base : base + 4] != _FRZM_MAGIC:
            raise FormatError(
                f"{path}: bad chunk magic {raw[base:base + 4]!r} at byte offset "
                f"{base}, expected {_FRZM_MAGIC!r}"
            )
        bits = np.unpackbits(np.frombuffer(raw, np.uint8, offset=base + 4))
        freeze = bits[: P * H * W].reshape(P, H, W).astype(bool)

    cam = CameraModel(fx=fx, fy=fy, cx=cx, cy=cy, width=src_w, height=src_h)
    # the stored factor is float32; nudge by an ulp if quantization moved
    # ceil(a * source size) across an integer
    a_exact = None
    for cand in (a, a * (1.0 - 2.0 ** -22), a * (1.0 + 2.0 ** -22)):
        if math.ceil(cand * src_h) == H and math.ceil(cand * src_w) == W:
            a_exact = cand
            break
    if a_exact is None:
        raise FormatError(
            f"{path}: texel grid {H}x{W} inconsistent with expansion {a} of "
            f"source {src_h}x{src_w}"
        )
    spacing, delta = _infer_spacing(depths, d_near, d_far)
    return MpiVolume(
        texels=texels,
        plane_depths=depths,
        delta=delta,
        reference=cam,
        expansion=ExpansionSpec.from_factor(*cam.long_border(), a_exact),
        freeze=freeze,
        spacing=spacing,
    ).validate()


# -- web bundle --------------------------------------------------------------

_MANIFEST_KEYS = (
    "planes", "width", "height", "depths", "fx", "fy", "cx", "cy",
    "expansion", "delta",
)


def export_web(mpi: MpiVolume, out_dir) -> Path:
    """Write a browser-consumable bundle: manifest.json + plane PNGs.

    Planes are emitted near-to-far as 8-bit RGBA with straight alpha
    1 - exp(-sigma * thickness), using each plane's own thickness, so
    back-to-front over-blending of the bundle reproduces composite() to
    quantization error.  Manifest intrinsics describe the expanded camera.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ec = mpi.expanded_cam()
    deltas = mpi.plane_deltas()
    for p in range(mpi.num_planes):
        rgb = mpi.texels[p, :, :, :3]
        alpha = 1.0 - np.exp(-mpi.texels[p, :, :, 3] * deltas[p])
        rgba = np.rint(np.dstack([rgb, alpha]) * 255.0).astype(np.uint8)
        _atomic_bytes(
            out / f"plane_{p:04d}.png", _encode_png(rgba[:, :, [2, 1, 0, 3]])
        )
    manifest = {
        "planes": mpi.num_planes,
        "width": mpi.width,
        "height": mpi.height,
        "depths": [float(d) for d in mpi.plane_depths],
        "fx": ec.fx,
        "fy": ec.fy,
        "cx": ec.cx,
        "cy": ec.cy,
        "expansion": float(mpi.expansion.a),
        "delta": float(mpi.delta),
    }
    _atomic_text(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    return out


def load_web_bundle(bundle_dir):
    """Read a web bundle back: (manifest dict, (P, H, W, 4) float RGBA)."""
    bundle_dir = Path(bundle_dir)
    mpath = bundle_dir / "manifest.json"
    if not mpath.exists():
        raise FormatError(f"{bundle_dir}: missing manifest.json")
    manifest = json.loads(mpath.read_text())
    for key in _MANIFEST_KEYS:
        if key not in manifest:
            raise FormatError(f"{mpath}: missing key {key!r}")
    pngs = sorted(bundle_dir.glob("plane_*.png"))
    if len(pngs) != manifest["planes"]:
        raise FormatError(
            f"{bundle_dir}: manifest declares {manifest['planes']} planes but "
            f"{len(pngs)} plane PNGs are present"
        )
    if len(manifest["depths"]) != manifest["planes"]:
        raise FormatError(
            f"{mpath}: depths has {len(manifest['depths'])} entries for "
            f"{manifest['planes']} planes"
        )
    planes = np.empty(
        (manifest["planes"], manifest["height"], manifest["width"], 4), np.float64
    )
    for p, png in enumerate(pngs):
        img = _decode_png(png)
        if img.shape != (manifest["height"], manifest["width"], 4):
            raise FormatError(
                f"{png}: expected {manifest['height']}x{manifest['width']} RGBA, "
                f"got {img.shape}"
            )
        planes[p] = img[:, :, [2, 1, 0, 3]].astype(np.float64) / 255.0
    return manifest, planes


# -- trajectories and pose entries -------------------------------------------

_ENTRY_KEYS = ("R", "t", "fx", "fy", "cx", "cy", "width", "height")


def camera_entry(cam: CameraModel) -> dict:
    """A trajectory-file entry for one camera (pose plus intrinsics)."""
    return {
        "R": [float(v) for v in cam.R.reshape(-1)],
        "t": [float(v) for v in cam.t],
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "width": cam.width,
        "height": cam.height,
    }


def entry_camera(entry: dict, where: str = "<trajectory>") -> CameraModel:
    for key in _ENTRY_KEYS:
        if key not in entry:
            raise FormatError(f"{where}: missing key {key!r}")
    R = np.asarray(entry["R"], dtype=np.float64)
    t = np.asarray(entry["t"], dtype=np.float64)
    if R.shape != (9,):
        raise FormatError(f"{where}: R must have 9 entries, got {R.shape}")
    if t.shape != (3,):
        raise FormatError(f"{where}: t must have 3 entries, got {t.shape}")
    return CameraModel(
        fx=entry["fx"],
        fy=entry["fy"],
        cx=entry["cx"],
        cy=entry["cy"],
        width=entry["width"],
        height=entry["height"],
        R=R.reshape(3, 3),
        t=t,
    )


def _entry_text(entry: dict, pad: str) -> str:
    R = ", ".join(_f17(v) for v in entry["R"])
    t = ", ".join(_f17(v) for v in entry["t"])
    lines = [f'{pad}"R": [{R}],', f'{pad}"t": [{t}],']
    for key in ("fx", "fy", "cx", "cy"):
        lines.append(f'{pad}"{key}": {_f17(entry[key])},')
    lines.append(f'{pad}"width": {int(entry["width"])},')
    lines.append(f'{pad}"height": {int(entry["height"])}')
    return "{\n" + "\n".join(lines) + "\n" + pad[:-2] + "}"


def write_trajectory(path, cams: list[CameraModel]) -> None:
    """Emit cameras as a JSON array, floats at 17 significant digits."""
    body = ",\n  ".join(
        _entry_text(camera_entry(c), pad="    ") for c in cams
    )
    _atomic_text(path, "[\n  " + body + "\n]\n" if cams else "[]\n")


def read_trajectory(path) -> list[CameraModel]:
    try:
        entries = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(entries, list):
        raise FormatError(f"{path}: trajectory must be a JSON array")
    return [
        entry_camera(e, where=f"{path}[{i}]") for i, e in enumerate(entries)
    ]


# -- pseudo-view bundles ------------------------------------------------------


def save_views(out_dir, bundle: PseudoBundle) -> Path:
    """Write a view directory: 16-bit PNGs, DPTH depth, pose JSON, masks.

    Each pose file doubles as a trajectory entry carrying the shared
    camera intrinsics, so single views can be fed back to the renderer.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cam = bundle.camera
    for i, view in enumerate(bundle.views):
        write_rgb(out / f"view_{i:03d}.png", view.rgb, bits=16)
        write_depth(out / f"view_{i:03d}.dpth", view.depth)
        write_mask(out / f"mask_{i:03d}.png", view.inpaint_mask)
        entry = camera_entry(cam.with_pose(view.pose))
        _atomic_text(
            out / f"view_{i:03d}.pose.json", _entry_text(entry, pad="  ") + "\n"
        )
    return out


def load_views(views_dir) -> PseudoBundle:
    views_dir = Path(views_dir)
    pngs = sorted(views_dir.glob("view_*.png"))
    if not pngs:
        raise FormatError(f"{views_dir}: no view_*.png files found")
    camera = None
    views = []
    for i, png in enumerate(pngs):
        if png.name != f"view_{i:03d}.png":
            raise FormatError(
                f"{views_dir}: view files must be contiguous from view_000; "
                f"found {png.name} at position {i}"
            )
        stem = png.name[: -len(".png")]
        pose_path = views_dir / f"{stem}.pose.json"
        if not pose_path.exists():
            raise FormatError(f"{views_dir}: missing {pose_path.name}")
        cam_i = entry_camera(json.loads(pose_path.read_text()), where=str(pose_path))
        if camera is None:
            # world frame is the reference view's frame
            camera = CameraModel(
                cam_i.fx, cam_i.fy, cam_i.cx, cam_i.cy, cam_i.width, cam_i.height
            )
        views.append(
            PseudoView(
                rgb=read_rgb(png),
                depth=read_depth(views_dir / f"{stem}.dpth"),
                inpaint_mask=read_mask(views_dir / f"mask_{i:03d}.png"),
                pose=cam_i.pose,
            ).validate()
        )
    return PseudoBundle(camera=camera, views=views)
