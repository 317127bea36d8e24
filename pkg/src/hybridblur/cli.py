"""Command-line driver: ``render``, ``compare`` and ``dump-buffers``.

Every run prints a single-line JSON report on standard output.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numba
import numpy as np

from . import imageio
from .oracle import psnr
from .pipeline import HybridFrame, render_hybrid, render_mode
from .scene import RenderConfig, SceneError, load_scene

# RenderConfig field -> command-line flag
CONFIG_FLAGS = {
    "sample_count": "--samples",
    "tile_size": "--tile-size",
    "min_speed": "--min-speed",
    "depth_delta_rel": "--depth-delta-rel",
    "depth_delta_abs": "--depth-delta-abs",
    "sobel_threshold": "--sobel-threshold",
    "depth_scale": "--depth-scale",
    "range_check_max": "--range-check-max",
    "max_recursion": "--max-recursion",
    "luminance_tol": "--luminance-tol",
    "ray_epsilon": "--ray-epsilon",
    "z_extent": "--z-extent",
    "id_mode": "--id-mode",
    "ground_truth_time_samples": "--time-samples",
}
MODES = ("hybrid", "baseline", "groundtruth")


class CLIError(Exception):
    pass


def _add_scene_args(p, with_mode=True):
    p.add_argument("--scene", required=True, help="scene JSON file")
    if with_mode:
        p.add_argument("--mode", choices=MODES, default="hybrid")
    _add_config_args(p)


def _add_config_args(p):
    p.add_argument("--workers", type=int, default=None,
                   help="number of worker threads (results do not depend on it)")
    types = {f.name: f.type for f in dataclasses.fields(RenderConfig)}
    for name, flag in CONFIG_FLAGS.items():
        if name == "id_mode":
            p.add_argument(flag, dest=name, choices=("luminance", "mesh"), default=None)
            continue
        conv = int if "int" in str(types[name]) else float
        p.add_argument(flag, dest=name, type=conv, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridblur",
                                     description="Hybrid ray-traced / post-process motion blur")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="render a frame")
    _add_scene_args(r)
    r.add_argument("--out", required=True, help="output PNG (sRGB)")
    r.add_argument("--out-pfm", help="optional linear PFM output")
    r.add_argument("--dump-buffers", metavar="DIR", help="write intermediate buffers to DIR")

    d = sub.add_parser("dump-buffers", help="render in hybrid mode and dump every buffer")
    _add_scene_args(d, with_mode=False)
    d.add_argument("dir", help="output directory")

    c = sub.add_parser("compare", help="PSNR between two images or two render modes")
    c.add_argument("images", nargs="*", help="two image files (PNG or PFM)")
    c.add_argument("--mask", help="mask PNG restricting the masked PSNR")
    c.add_argument("--scene", help="render the two modes from this scene instead of reading files")
    c.add_argument("--mode-a", choices=MODES, default="hybrid")
    c.add_argument("--mode-b", choices=MODES, default="groundtruth")
    _add_config_args(c)
    return parser


def _set_workers(n):
    if n is None:
        return
    if n < 1:
        raise CLIError("--workers must be >= 1")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _load(args):
    try:
        scene, cfg = load_scene(args.scene)
    except SceneError as exc:
        raise CLIError(str(exc)) from exc
    overrides = {name: getattr(args, name) for name in CONFIG_FLAGS
                 if getattr(args, name, None) is not None}
    try:
        cfg = dataclasses.replace(cfg, **overrides)
    except ValueError as exc:
        raise CLIError(f"invalid configuration: {exc}") from exc
    return scene, cfg


def dump_frame(frame: HybridFrame, out_dir) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    g, bg = frame.gbuffer, frame.background
    files = {
        "depth.pfm": lambda p: imageio.write_pfm(p, g.depth),
        "normal.pfm": lambda p: imageio.write_pfm(p, g.normal),
        "mesh_id.png": lambda p: imageio.write_id_png(p, g.mesh_id),
        "velocity.pfm": lambda p: imageio.write_pfm(p, g.velocity),
        "albedo.pfm": lambda p: imageio.write_pfm(p, g.albedo),
        "color.pfm": lambda p: imageio.write_pfm(p, g.color),
        "mask_candidate.png": lambda p: imageio.write_mask_png(p, frame.masks.candidate),
        "mask_edge.png": lambda p: imageio.write_mask_png(p, frame.masks.edge),
        "mask_ray.png": lambda p: imageio.write_mask_png(p, frame.masks.ray),
        "bg_color.pfm": lambda p: imageio.write_pfm(p, bg.color),
        "bg_depth.pfm": lambda p: imageio.write_pfm(p, bg.depth),
        "bg_velocity.pfm": lambda p: imageio.write_pfm(p, bg.velocity),
        "bg_valid.png": lambda p: imageio.write_mask_png(p, bg.valid),
        "raster_blur.pfm": lambda p: imageio.write_pfm(p, frame.raster_layer.color),
        "bg_blur.pfm": lambda p: imageio.write_pfm(p, frame.background_layer.color),
        "alpha.pfm": lambda p: imageio.write_pfm(p, frame.raster_layer.alpha),
    }
    written = {}
    for name, writer in files.items():
        path = os.path.join(out_dir, name)
        writer(path)
        written[name.rsplit(".", 1)[0]] = path
    return written


def cmd_render(args) -> dict:
    _set_workers(args.workers)
    scene, cfg = _load(args)
    image, report, frame = render_mode(scene, cfg, args.mode)
    imageio.write_png(args.out, image)
    report.outputs["png"] = args.out
    if args.out_pfm:
        imageio.write_pfm(args.out_pfm, image)
        report.outputs["pfm"] = args.out_pfm
    if args.dump_buffers:
        if frame is None:
            frame = render_hybrid(scene, cfg)
        report.outputs["buffers"] = dump_frame(frame, args.dump_buffers)
    return report.to_dict()


def cmd_dump(args) -> dict:
    _set_workers(args.workers)
    scene, cfg = _load(args)
    frame = render_hybrid(scene, cfg)
    report = frame.report
    report.outputs["buffers"] = dump_frame(frame, args.dir)
    return report.to_dict()


def compare_images(a, b, mask=None, mode_a="a", mode_b="b") -> dict:
    if a.shape != b.shape:
        raise CLIError(f"image dimensions differ: {a.shape[:2]} vs {b.shape[:2]}")
    out = {"mode_a": mode_a, "mode_b": mode_b, "psnr_full": psnr(a, b),
           "psnr_masked": None, "mask_count": 0}
    if mask is not None:
        if mask.shape != a.shape[:2]:
            raise CLIError("mask dimensions differ from the images")
        out["mask_count"] = int(np.count_nonzero(mask))
        if out["mask_count"]:
            out["psnr_masked"] = psnr(a, b, mask)
    return out


def cmd_compare(args) -> dict:
    _set_workers(args.workers)
    if args.scene:
        scene, cfg = _load(args)
        a, _, fa = render_mode(scene, cfg, args.mode_a)
        b, _, fb = render_mode(scene, cfg, args.mode_b)
        frame = fa or fb or render_hybrid(scene, cfg)
        mask = frame.masks.ray.bits
        if args.mask:
            mask = imageio.read_mask_png(args.mask)
        return compare_images(a, b, mask, args.mode_a, args.mode_b)
    if len(args.images) != 2:
        raise CLIError("compare needs two image paths or --scene")
    for p in args.images + ([args.mask] if args.mask else []):
        if not os.path.exists(p):
            raise CLIError(f"file not found: {p}")
    a = imageio.read_image_linear(args.images[0])
    b = imageio.read_image_linear(args.images[1])
    mask = imageio.read_mask_png(args.mask) if args.mask else None
    return compare_images(a, b, mask, args.images[0], args.images[1])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"render": cmd_render, "dump-buffers": cmd_dump, "compare": cmd_compare}[args.command]
    try:
        report = handler(args)
    except (CLIError, OSError, ValueError) as exc:
        print(f"hybridblur: error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(report, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
