"""Generate the web viewer's test fixtures.

Writes into frontend/fixtures/:
  bundle/               a small exported web bundle (manifest + plane PNGs)
  bundle.json           the same bundle with plane RGBA bytes inlined as
                        base64, so the TypeScript tests can composite
                        without a PNG decoder
  reference.json        the core renderer's identity-pose frame for that
                        bundle, 8-bit RGB, base64
  pose_roundtrip.json   a one-entry trajectory emitted by the Python
                        writer; the viewer's "copy pose" output for the
                        same pose must parse to identical numbers
"""

import argparse
import base64
import json
from pathlib import Path

import numpy as np

from empi import io
from empi.camera import CameraModel, ExpansionSpec, Pose, rot_y
from empi.mpi import MpiVolume, composite


def fixture_volume(planes=6, size=48, a=1.25, seed=7) -> MpiVolume:
    """A random semi-transparent volume: exercises deep blending chains."""
    rng = np.random.default_rng(seed)
    cam = CameraModel(
        fx=float(size), fy=float(size),
        cx=(size - 1) / 2.0, cy=(size - 1) / 2.0, width=size, height=size,
    )
    H = W = int(np.ceil(a * size))
    texels = np.empty((planes, H, W, 4))
    texels[..., :3] = rng.uniform(0.0, 1.0, (planes, H, W, 3))
    texels[..., 3] = rng.uniform(0.0, 2.5, (planes, H, W))
    return MpiVolume(
        texels=texels,
        plane_depths=2.0 + np.arange(planes, dtype=float),
        delta=1.0,
        reference=cam,
        expansion=ExpansionSpec.from_factor(*cam.long_border(), a),
    ).validate()


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument(
        "--out", type=Path, default=Path(__file__).resolve().parent.parent / "frontend" / "fixtures"
    )
    args = ap.parse_args()
    out = args.out
    out.mkdir(parents=True, exist_ok=True)

    vol = fixture_volume()
    bundle_dir = io.export_web(vol, out / "bundle")
    manifest, planes = io.load_web_bundle(bundle_dir)

    planes_u8 = np.rint(planes * 255.0).astype(np.uint8)
    bundle_json = {
        "manifest": manifest,
        "planes": [
            base64.b64encode(p.tobytes()).decode("ascii") for p in planes_u8
        ],
    }
    io._atomic_text(out / "bundle.json", json.dumps(bundle_json) + "\n")

    frame = composite(vol.texels, vol.plane_deltas())
    frame_u8 = np.rint(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    reference = {
        "width": vol.width,
        "height": vol.height,
        "pixels": base64.b64encode(frame_u8.tobytes()).decode("ascii"),
    }
    io._atomic_text(out / "reference.json", json.dumps(reference) + "\n")

    viewer_cam = CameraModel(
        fx=manifest["fx"], fy=manifest["fy"], cx=manifest["cx"], cy=manifest["cy"],
        width=manifest["width"], height=manifest["height"],
        R=rot_y(0.125), t=np.array([0.25, -0.125, 0.0625]),
    )
    io.write_trajectory(out / "pose_roundtrip.json", [viewer_cam])
    print(f"fixtures written to {out}/")


if __name__ == "__main__":
    main()
