"""Command-line entry point.

Subcommands: gen-synth, train, eval, convert, warp, export-ply, gradcheck.
Exit codes: 0 success, 1 validation/configuration error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import dataio
from .autodiff import Tensor
from .errors import ConfigError, IngestionError, SphereDepthError
from .metrics import export_pointcloud
from .pipeline import TrainConfig, evaluate, format_report, load_model, \
    predict_depth, save_model, train_selfsup, train_supervised
from .resample import c2e, e2c
from .sphere import PoseSE3
from .synth import SceneSpec, make_sequence, random_trajectory


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--mode", choices=("supervised", "selfsup"))
    p.add_argument("--loss", choices=("capl", "spl"))
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--epochs", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--image-height", type=int, dest="image_height")
    p.add_argument("--cube-side", type=int, dest="cube_side")
    p.add_argument("--rotation-noise-deg", type=float, dest="rotation_noise_deg")
    p.add_argument("--rotation-axis", choices=("pitch", "yaw", "roll"),
                   dest="rotation_axis")


def _config_from_args(args) -> TrainConfig:
    keys = ("mode", "loss", "lr", "batch_size", "epochs", "iterations", "seed",
            "image_height", "cube_side", "rotation_noise_deg", "rotation_axis")
    overrides = {k: getattr(args, k) for k in keys
                 if getattr(args, k, None) is not None}
    if args.config:
        return TrainConfig.from_json(args.config, overrides)
    return TrainConfig.from_dict(overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spheredepth",
                                     description="360-degree depth estimation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="render a synthetic panorama sequence")
    p.add_argument("out", help="output dataset directory")
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--texture-strength", type=float, default=1.0)
    p.add_argument("--wall-strengths", type=float, nargs=6, default=None)
    p.add_argument("--occluder", type=float, nargs=6, default=None,
                   metavar=("CX", "CY", "CZ", "SX", "SY", "SZ"))

    p = sub.add_parser("train", help="train depth (and pose) networks")
    p.add_argument("data", help="dataset root with manifest.txt")
    p.add_argument("out", help="output checkpoint path")
    p.add_argument("--runlog", help="write per-iteration JSONL log here")
    _add_config_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint against ground truth")
    p.add_argument("data")
    p.add_argument("checkpoint")
    p.add_argument("--align", action="store_true",
                   help="median-align predictions before scoring")
    p.add_argument("--ply", help="also export the first frame as a point cloud")
    _add_config_flags(p)

    p = sub.add_parser("convert", help="equirect/cubemap conversion of a PNG")
    p.add_argument("direction", choices=("e2c", "c2e"))
    p.add_argument("input")
    p.add_argument("out_prefix")
    p.add_argument("--face-side", type=int, default=64)
    p.add_argument("--height", type=int, default=64)

    p = sub.add_parser("warp", help="warp a target frame into a reference view")
    p.add_argument("target_png")
    p.add_argument("depth_pfm")
    p.add_argument("out_png")
    p.add_argument("--pose", type=float, nargs=12, default=None,
                   help="row-major 3x4 reference->target motion (default identity)")

    p = sub.add_parser("export-ply", help="depth map + RGB -> point cloud")
    p.add_argument("rgb_png")
    p.add_argument("depth_pfm")
    p.add_argument("out_ply")

    p = sub.add_parser("gradcheck", help="finite-difference check of every op")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-3)
    return parser


def _cmd_gen_synth(args) -> int:
    scene = SceneSpec(seed=args.seed, texture_strength=args.texture_strength,
                      wall_strengths=tuple(args.wall_strengths) if args.wall_strengths else None,
                      occluder_center=tuple(args.occluder[:3]) if args.occluder else None,
                      occluder_size=tuple(args.occluder[3:]) if args.occluder else None)
    traj = random_trajectory(scene, args.frames, seed=args.seed + 1)
    frames = make_sequence(scene, traj, args.height)
    dataio.save_dataset(args.out, frames)
    print(f"wrote {len(frames)} frames to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _config_from_args(args)
    frames = list(dataio.load_dataset(args.data))
    if not frames:
        raise IngestionError(f"no frames in {args.data}")
    if cfg.mode == "supervised":
        net, runlog = train_supervised(cfg, frames)
        save_model(args.out, net)
    else:
        net, pose_net, runlog = train_selfsup(cfg, frames)
        save_model(args.out, net, pose_net)
    if args.runlog:
        runlog.save(args.runlog)
    print(f"trained {cfg.mode} for {len(runlog.records)} iterations, "
          f"final loss {runlog.records[-1]['loss']:.6f}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    frames = list(dataio.load_dataset(args.data))
    net, _ = load_model(args.checkpoint, cfg, with_pose=(cfg.mode == "selfsup"))
    aggregate, per_frame = evaluate(net, frames, cfg.cube_side, align=args.align)
    print(format_report(aggregate, per_frame))
    if args.ply:
        fr = frames[0]
        pred = predict_depth(net, fr.rgb.data, cfg.cube_side)
        n = export_pointcloud(pred, fr.rgb.data, args.ply)
        print(f"wrote {n} points to {args.ply}")
    return 0


def _cmd_convert(args) -> int:
    img = dataio.load_png(args.input)
    if args.direction == "e2c":
        cube = e2c(Tensor(img[None].astype(np.float64)), args.face_side).data
        from .sphere import FACE_ORDER
        for i, face in enumerate(FACE_ORDER):
            dataio.save_png(f"{args.out_prefix}_{face}.png", cube[i])
        print(f"wrote 6 faces to {args.out_prefix}_*.png")
    else:
        # input must be a face-major vertical strip [6w, w] per channel
        C, H6, W = img.shape
        if H6 != 6 * W:
            raise IngestionError("c2e input must be a 6w x w vertical face strip")
        cube = img.reshape(C, 6, W, W).transpose(1, 0, 2, 3)
        equi = c2e(Tensor(cube.astype(np.float64)), args.height).data[0]
        dataio.save_png(f"{args.out_prefix}.png", equi)
        print(f"wrote {args.out_prefix}.png")
    return 0


def _cmd_warp(args) -> int:
    from .resample import warp_to_reference

    target = dataio.load_png(args.target_png)
    depth = dataio.read_pfm(args.depth_pfm)
    if args.pose is None:
        pose = PoseSE3.identity()
    else:
        mat = np.array(args.pose).reshape(3, 4)
        pose = PoseSE3(mat[:, :3], mat[:, 3])
    warped, valid = warp_to_reference(Tensor(target.astype(np.float64)),
                                      Tensor(depth.astype(np.float64)),
                                      Tensor(pose.R), Tensor(pose.t))
    dataio.save_png(args.out_png, warped.data * valid[None])
    print(f"wrote {args.out_png} ({int(valid.sum())} valid pixels)")
    return 0


def _cmd_export_ply(args) -> int:
    rgb = dataio.load_png(args.rgb_png)
    depth = dataio.read_pfm(args.depth_pfm)
    n = export_pointcloud(depth, rgb, args.out_ply)
    print(f"wrote {n} points to {args.out_ply}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_all

    results = run_all(seed=args.seed)
    worst_name = max(results, key=results.get)
    for name in sorted(results):
        print(f"{name:24s} {results[name]:.3e}")
    if results[worst_name] > args.tol:
        print(f"FAIL: {worst_name} exceeds tolerance {args.tol:g}")
        return 1
    print(f"OK: worst {worst_name} = {results[worst_name]:.3e}")
    return 0


_COMMANDS = {
    "gen-synth": _cmd_gen_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "convert": _cmd_convert,
    "warp": _cmd_warp,
    "export-ply": _cmd_export_ply,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (IngestionError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (SphereDepthError, ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
