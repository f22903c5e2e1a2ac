"""Command line interface orchestrating the pipeline.

Subcommands: init, pseudo, optimize, render, export-web, eval, gradcheck.
Every subcommand accepts --config FILE, a JSON object of long-option names
merged as defaults (explicit flags win).  Evaluative subcommands print a
JSON summary on stdout so runs are scriptable.

Convention: the world frame is the reference camera's frame; cameras read
from image files get a centered principal point and the --focal length.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .camera import CameraModel, ExpansionSpec, Pose, PoseRanges, sample_poses
from .metrics import MetricReport, ViewMetrics, psnr, ssim
from .mpi import init_mpi, render_view
from .optim import OptimizeConfig, gradcheck, optimize, write_loss_trace
from .pseudo import build_pseudo_views

__all__ = ["cli_dispatch", "main"]


def _read_depth_any(path: str):
    """DPTH for .dpth files, 16-bit PNG + sidecar otherwise."""
    if str(path).endswith(".dpth"):
        return io.read_depth(path)
    return io.read_depth_png16(path)


def _camera_for_image(rgb: np.ndarray, focal: float | None) -> CameraModel:
    h, w = rgb.shape[:2]
    f = float(focal) if focal is not None else float(max(w, h))
    return CameraModel(
        fx=f, fy=f, cx=(w - 1) / 2.0, cy=(h - 1) / 2.0, width=w, height=h
    )


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2))


# -- subcommand bodies -------------------------------------------------------


def _cmd_init(args) -> int:
    rgb = io.read_rgb(args.image)
    depth = _read_depth_any(args.depth)
    cam = _camera_for_image(rgb, args.focal)
    expansion = ExpansionSpec.from_theta(
        *cam.long_border(), math.radians(args.theta)
    )
    depth_range = tuple(args.depth_range) if args.depth_range else None
    result = init_mpi(
        rgb, depth, cam, args.planes, expansion,
        depth_range=depth_range, spacing=args.spacing,
    )
    io.save_mpi(args.out, result.volume)
    _emit({
        "out": str(args.out),
        "planes": result.volume.num_planes,
        "height": result.volume.height,
        "width": result.volume.width,
        "expansion": result.volume.expansion.a,
        "clamped": result.clamped,
    })
    return 0


def _cmd_pseudo(args) -> int:
    rgb = io.read_rgb(args.image)
    depth = _read_depth_any(args.depth)
    cam = _camera_for_image(rgb, args.focal)
    if args.poses:
        poses = [c.pose for c in io.read_trajectory(args.poses)]
    else:
        ranges = PoseRanges(
            max_translation=(args.max_trans, args.max_trans, args.max_trans),
            max_yaw=math.radians(args.max_yaw),
            max_pitch=math.radians(args.max_pitch),
        )
        poses = sample_poses(Pose.identity(), ranges, args.n, args.seed)
    bundle = build_pseudo_views(rgb, depth, cam, poses)
    io.save_views(args.out, bundle)
    _emit({"out": str(args.out), "views": len(bundle.views)})
    return 0


def _cmd_optimize(args) -> int:
    mpi = io.load_mpi(args.mpi)
    bundle = io.load_views(args.views)
    config = OptimizeConfig(
        iters=args.iters,
        step_size=args.lr,
        batch=args.batch,
        loss_mode=args.loss,
        dssim_weight=args.dssim_weight,
        filter_enabled=args.filter == "on",
        deterministic=args.deterministic == "on",
        seed=args.seed,
        precision=args.precision,
    )
    result = optimize(mpi, bundle.views, config)
    io.save_mpi(args.out, result.volume)
    if args.trace:
        write_loss_trace(args.trace, result.trace)
    _emit({
        "out": str(args.out),
        "iters": len(result.trace),
        "final_loss": result.trace[-1].loss,
        "final_psnr_ref": result.trace[-1].psnr_ref,
        "trace": str(args.trace) if args.trace else None,
    })
    return 0


def _cmd_render(args) -> int:
    mpi = io.load_mpi(args.mpi)
    cams = io.read_trajectory(args.trajectory)
    out_dir = Path(args.out_dir)
    frames = []
    for i, cam in enumerate(cams):
        frame = render_view(mpi, cam, cam.pose)
        path = out_dir / f"frame_{i:03d}.png"
        io.write_rgb(path, np.clip(frame, 0.0, 1.0))
        frames.append(str(path))
    _emit({"out_dir": str(out_dir), "frames": len(frames)})
    return 0


def _cmd_export_web(args) -> int:
    mpi = io.load_mpi(args.mpi)
    out = io.export_web(mpi, args.out)
    _emit({"out": str(out), "planes": mpi.num_planes})
    return 0


def _cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    preds = sorted(pred_dir.glob("*.png"))
    gts = sorted(gt_dir.glob("*.png"))
    if len(preds) != len(gts) or not preds:
        print(
            f"eval: {pred_dir} has {len(preds)} PNGs, {gt_dir} has {len(gts)}",
            file=sys.stderr,
        )
        return 1
    report = MetricReport()
    for p, g in zip(preds, gts):
        a, b = io.read_rgb(p), io.read_rgb(g)
        report.per_view.append(
            ViewMetrics(name=p.name, psnr=psnr(a, b), ssim=ssim(a, b))
        )
    io._atomic_text(args.out, json.dumps(report.to_dict(), indent=2) + "\n")
    _emit(report.to_dict()["mean"] | {"out": str(args.out), "views": len(preds)})
    return 0


def _cmd_gradcheck(args) -> int:
    report = gradcheck(
        planes=args.planes,
        height=args.size,
        width=args.size,
        seed=args.seed,
        precision=args.precision,
        loss_mode=args.loss,
        dssim_weight=args.dssim_weight,
        filter_enabled=args.filter == "on",
        probes=args.probes,
    )
    _emit(report.to_dict())
    return 0 if report.passed else 1


# -- parser ------------------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="empi", description="Expanded multiplane image pipeline."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {}

    def command(name, func, **kw):
        p = sub.add_parser(name, **kw)
        p.add_argument(
            "--config",
            help="JSON file of option defaults; explicit flags take precedence",
        )
        p.set_defaults(func=func)
        commands[name] = p
        return p

    p = command("init", _cmd_init, help="seed an expanded MPI from one RGB-D view")
    p.add_argument("--image", required=True)
    p.add_argument("--depth", required=True, help=".dpth binary or 16-bit PNG")
    p.add_argument("--planes", type=int, default=32)
    p.add_argument("--theta", type=float, default=90.0, help="target fov, degrees")
    p.add_argument("--focal", type=float, default=None,
                   help="focal length in pixels; default max(width, height)")
    p.add_argument("--depth-range", type=float, nargs=2, default=None,
                   metavar=("NEAR", "FAR"))
    p.add_argument("--spacing", choices=("depth", "disparity"), default="depth")
    p.add_argument("--out", required=True)

    p = command("pseudo", _cmd_pseudo, help="build warped-and-filled training views")
    p.add_argument("--image", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--poses", default=None, help="trajectory JSON; overrides --n")
    p.add_argument("--n", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--focal", type=float, default=None)
    p.add_argument("--max-yaw", type=float, default=2.0, help="degrees")
    p.add_argument("--max-pitch", type=float, default=1.5, help="degrees")
    p.add_argument("--max-trans", type=float, default=0.1, help="per axis")
    p.add_argument("--out", required=True)

    p = command("optimize", _cmd_optimize, help="fit MPI texels to the views")
    p.add_argument("--mpi", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--loss", choices=("l1", "l1_plus_dssim"), default="l1")
    p.add_argument("--dssim-weight", type=float, default=0.0)
    p.add_argument("--filter", choices=("on", "off"), default="on")
    p.add_argument("--deterministic", choices=("on", "off"), default="on")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", choices=("f32", "f64"), default="f64")
    p.add_argument("--trace", default=None, help="write per-step loss CSV here")
    p.add_argument("--out", required=True)

    p = command("render", _cmd_render, help="render the MPI along a trajectory")
    p.add_argument("--mpi", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--out-dir", required=True)

    p = command("export-web", _cmd_export_web, help="emit a browser bundle")
    p.add_argument("--mpi", required=True)
    p.add_argument("--out", required=True)

    p = command("eval", _cmd_eval, help="PSNR/SSIM between two frame directories")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--out", required=True, help="JSON report path")

    p = command("gradcheck", _cmd_gradcheck,
                help="finite-difference audit of the optimizer gradients")
    p.add_argument("--planes", type=int, default=4)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", choices=("f32", "f64"), default="f64")
    p.add_argument("--loss", choices=("l1", "l1_plus_dssim"), default="l1")
    p.add_argument("--dssim-weight", type=float, default=0.0)
    p.add_argument("--filter", choices=("on", "off"), default="on")
    p.add_argument("--probes", type=int, default=200)

    return parser, commands


def cli_dispatch(argv: list[str]) -> int:
    """Parse argv and run one subcommand; returns the process exit status."""
    parser, commands = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            overrides = json.loads(Path(args.config).read_text())
            if not isinstance(overrides, dict):
                print("--config must hold a JSON object", file=sys.stderr)
                return 2
            overrides = {k.replace("-", "_"): v for k, v in overrides.items()}
            sub = commands[args.command]
            valid = {a.dest for a in sub._actions}
            unknown = set(overrides) - valid
            if unknown:
                print(
                    f"--config has unknown keys for {args.command}: "
                    f"{sorted(unknown)}",
                    file=sys.stderr,
                )
                return 2
            sub.set_defaults(**overrides)
            args = parser.parse_args(argv)  # explicit flags still win
        return args.func(args)
    except SystemExit as e:  # argparse error or --help
        return int(e.code or 0)


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
