"""Write the procedural demo scene as image.png + depth.dpth."""

import argparse
from pathlib import Path

from empi import io
from empi.scenes import demo_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--out", type=Path, default=Path("demo_scene"))
    args = ap.parse_args()

    rgb, depth, cam = demo_scene(args.size)
    args.out.mkdir(parents=True, exist_ok=True)
    io.write_rgb(args.out / "image.png", rgb)
    io.write_depth(args.out / "depth.dpth", depth)
    io.write_trajectory(args.out / "reference.json", [cam])
    print(f"wrote {args.out}/image.png, depth.dpth, reference.json "
          f"({args.size}x{args.size}, focal {cam.fx})")


if __name__ == "__main__":
    main()
