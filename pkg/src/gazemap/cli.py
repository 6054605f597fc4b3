"""Command-line interface: generate, export, render and bench subcommands.

Exit codes: 0 success, 1 usage error (bad flags, missing files), 2 data
error (malformed inputs, layout mismatch).
"""

from __future__ import annotations

import argparse
import math
import statistics
import sys
import time

import numpy as np

from .density import DensityMap, GenerationConfig, Timings, generate, normalize
from .errors import GazemapError
from .gaze import parse_fixation_log
from .geometry import build_sampled_meshes, load_scene_manifest
from .io_export import load_config, load_map, save_map, scene_layout_hash, write_export
from .render import default_colormap, load_colormap, render_heatmap

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_floats(text: str, n: int, label: str) -> list[float]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"{label} needs {n} comma-separated floats")
    return [float(p) for p in parts]


def _parse_window(text: str) -> tuple[float, float]:
    t0, sep, t1 = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError("time window must be t0:t1")
    return float(t0), float(t1)


def _parse_resolution(text: str) -> tuple[int, int]:
    w, sep, h = text.lower().partition("x")
    if not sep:
        raise argparse.ArgumentTypeError("resolution must be WIDTHxHEIGHT")
    return int(w), int(h)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--k", type=float, help="sampling density (samples per square meter)")
    p.add_argument("--theta-deg", type=float, help="gaze cone angular deviation in degrees")
    p.add_argument("--zbuffer-res", type=int, help="depth buffer side length in pixels")
    p.add_argument("--epsilon-abs", type=float, help="absolute visibility tolerance (m)")
    p.add_argument("--epsilon-rel", type=float, help="relative visibility tolerance")
    p.add_argument("--no-filtering", action="store_true", help="disable 4-sigma sample filtering")
    p.add_argument("--time-window", type=_parse_window, metavar="T0:T1",
                   help="only fixations with start time in [t0, t1)")
    p.add_argument("--objects", help="comma-separated object include list")
    p.add_argument("--workers", type=int, help="data-parallel worker count")


def _resolve_config(args) -> GenerationConfig:
    cfg = load_config(args.config) if args.config else GenerationConfig()
    if args.k is not None:
        cfg.k = args.k
    if args.theta_deg is not None:
        cfg.theta = math.radians(args.theta_deg)
    if args.zbuffer_res is not None:
        cfg.zbuffer_resolution = args.zbuffer_res
    if args.epsilon_abs is not None:
        cfg.epsilon_abs = args.epsilon_abs
    if args.epsilon_rel is not None:
        cfg.epsilon_rel = args.epsilon_rel
    if args.no_filtering:
        cfg.filtering_enabled = False
    if args.time_window is not None:
        cfg.time_window = args.time_window
    if args.objects is not None:
        cfg.object_include_list = {o.strip() for o in args.objects.split(",") if o.strip()}
    return cfg.validate()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gazemap", description="Surface-based gaze fixation density maps")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="accumulate a fixation log into a density map")
    g.add_argument("--scene", required=True, help="scene manifest (JSON)")
    g.add_argument("--fixations", required=True, help="fixation log file")
    g.add_argument("--out", required=True, help="output density map file")
    _add_config_flags(g)

    e = sub.add_parser("export", help="export per-sample values with spatial context")
    e.add_argument("--scene", required=True)
    e.add_argument("--map", required=True, dest="map_path", help="density map file")
    e.add_argument("--out", required=True, help="output CSV path")
    e.add_argument("--objects", help="comma-separated object include list")

    r = sub.add_parser("render", help="render the heatmap to an image")
    r.add_argument("--scene", required=True)
    r.add_argument("--map", required=True, dest="map_path")
    r.add_argument("--out", required=True, help="output PNG path")
    r.add_argument("--camera-pos", required=True, help="camera position x,y,z")
    r.add_argument("--camera-rot", required=True, help="camera rotation quaternion x,y,z,w")
    r.add_argument("--frustum", required=True, help="frustum l,r,t,b,n,f")
    r.add_argument("--resolution", type=_parse_resolution, default=(800, 600), metavar="WxH")
    r.add_argument("--gamma", type=float, default=1.0, help="value exponent before color lookup")
    r.add_argument("--colormap", help="colormap file (stop r g b per line)")

    b = sub.add_parser("bench", help="time filtered vs unfiltered generation")
    b.add_argument("--scene", required=True)
    b.add_argument("--fixations", required=True)
    b.add_argument("--reps", type=int, default=10, help="repetitions per mode")
    _add_config_flags(b)

    return parser


def _cmd_generate(args) -> int:
    cfg = _resolve_config(args)
    fixations = parse_fixation_log(args.fixations, cfg.time_window)
    scene = load_scene_manifest(args.scene)
    sampled = build_sampled_meshes(scene, cfg.k)
    timers = Timings()
    dmap = normalize(
        generate(scene, sampled, fixations, cfg, workers=args.workers, timers=timers),
        timers=timers,
    )
    save_map(dmap, args.out, scene_layout_hash(args.scene, cfg.k), cfg.k)
    total = sum(s.total_samples for s in sampled.values())
    print(f"{len(fixations)} fixations over {total} samples -> {args.out}")
    for phase, seconds in timers.phases.items():
        print(f"  {phase:<12}{seconds:8.3f} s")
    return 0


def _cmd_export(args) -> int:
    scene = load_scene_manifest(args.scene)
    dmap, header = load_map(args.map_path)
    expected = scene_layout_hash(args.scene, header["k"])
    load_map(args.map_path, expect_layout_hash=expected)  # raises on mismatch
    sampled = build_sampled_meshes(scene, header["k"])
    objects = None
    if args.objects is not None:
        objects = [o.strip() for o in args.objects.split(",") if o.strip()]
    count = write_export(dmap, scene, sampled, args.out, objects)
    print(f"wrote {count} records to {args.out}")
    return 0


def _cmd_render(args) -> int:
    scene = load_scene_manifest(args.scene)
    dmap, header = load_map(args.map_path)
    expected = scene_layout_hash(args.scene, header["k"])
    load_map(args.map_path, expect_layout_hash=expected)
    sampled = build_sampled_meshes(scene, header["k"])
    cmap = load_colormap(args.colormap, args.gamma) if args.colormap else default_colormap(args.gamma)
    render_heatmap(
        scene,
        dmap,
        sampled,
        _parse_floats(args.camera_pos, 3, "--camera-pos"),
        _parse_floats(args.camera_rot, 4, "--camera-rot"),
        _parse_floats(args.frustum, 6, "--frustum"),
        cmap,
        args.resolution,
        args.out,
    )
    print(f"rendered {args.resolution[0]}x{args.resolution[1]} image to {args.out}")
    return 0


def _map_checksum(dmap: DensityMap) -> bytes:
    import hashlib

    h = hashlib.sha256()
    for oid in sorted(dmap.values):
        h.update(np.ascontiguousarray(dmap.values[oid]).tobytes())
    return h.digest()


def _ci95(samples: list[float]) -> tuple[float, float]:
    from scipy import stats

    n = len(samples)
    mu = statistics.fmean(samples)
    if n < 2:
        return mu, mu
    half = stats.t.ppf(0.975, n - 1) * statistics.stdev(samples) / math.sqrt(n)
    return mu - half, mu + half


def _cmd_bench(args) -> int:
    cfg = _resolve_config(args)
    fixations = parse_fixation_log(args.fixations, cfg.time_window)
    scene = load_scene_manifest(args.scene)
    sampled = build_sampled_meshes(scene, cfg.k)
    total = sum(s.total_samples for s in sampled.values())
    print(f"bench: {len(fixations)} fixations, {total} samples, n={args.reps} repetitions")

    results: dict[bool, list[float]] = {True: [], False: []}
    for filtered in (True, False):
        cfg.filtering_enabled = filtered
        checksum = None
        for _ in range(args.reps):
            t0 = time.perf_counter()
            dmap = generate(scene, sampled, fixations, cfg, workers=args.workers)
            results[filtered].append(time.perf_counter() - t0)
            digest = _map_checksum(dmap)
            if checksum is None:
                checksum = digest
            elif digest != checksum:
                print("warning: value output varied across repetitions", file=sys.stderr)

    print(f"{'mode':<28}{'mu':>9}{'sigma':>9}{'CI (95%)':>22}")
    means = {}
    for filtered in (True, False):
        label = "with sample filtering" if filtered else "without sample filtering"
        ts = results[filtered]
        mu = statistics.fmean(ts)
        sigma = statistics.stdev(ts) if len(ts) > 1 else 0.0
        lo, hi = _ci95(ts)
        means[filtered] = mu
        print(f"{label:<28}{mu:8.3f}s{sigma:9.3f}{f'[{lo:.3f}s, {hi:.3f}s]':>22}")
    print(f"speedup (unfiltered/filtered): {means[False] / means[True]:.2f}x")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "export": _cmd_export,
    "render": _cmd_render,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as e:
        print(f"gazemap: file not found: {e.filename or e}", file=sys.stderr)
        return 1
    except GazemapError as e:
        print(f"gazemap: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
