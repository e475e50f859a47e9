"""Command-line entry point.

Subcommands: gen-scenes, gen-iqtt, render, reconstruct, metrics, gradcheck,
bench, and the ffi-* array boundary used by foreign-language bindings.

Conventions:
  * --seed everywhere; the SURFELGRAD_SEED environment variable overrides it.
  * config files are JSON; parse errors report line/column and exit 2.
  * exit codes: 0 success, 2 config error, 3 numerical failure, 4 IO error.
  * stdout carries only the declared payload; errors are a single
    structured JSON line on stderr.
  * every subcommand emits a RunManifest: file-producing commands write
    <out>/manifest.json (or <prefix>.manifest.json), report-style commands
    embed it in their stdout payload under "manifest".

Wall-times in manifests vary run to run by nature; all other outputs are
byte-identical given (seed, config), independent of --threads.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__, datasets, fileio, geometry, gradients, iqtt, metrics
from . import reconstruct as recon
from . import scene as scenemod
from . import shading, surfels
from .errors import (
    Diverged,
    InvalidParam,
    LightAtSurfel,
    NonFiniteOutput,
    PlacementFailure,
    SamplingFailure,
    SurfelError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class _Timer:
    def __init__(self):
        self.stages = {}

    def stage(self, name):
        timer = self

        class _Stage:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.stages[name] = time.perf_counter() - self.t0
                return False

        return _Stage()


def _load_json(path, what="config"):
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise InvalidParam(
            f"{what} {path}: parse error at line {exc.lineno} column {exc.colno}: "
            f"{exc.msg}"
        ) from exc


def _resolve_seed(args):
    env = os.environ.get("SURFELGRAD_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InvalidParam(f"SURFELGRAD_SEED must be an integer, got {env!r}")
    return args.seed


def _manifest(args, command, config, inputs, outputs, timer, seed):
    return {
        "tool": "surfelgrad",
        "version": __version__,
        "command": command,
        "seed": seed,
        "threads": args.threads,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "wall_times": timer.stages,
    }


def _write_manifest(path, manifest):
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)


# ---------------------------------------------------------------- commands


def cmd_gen_scenes(args):
    seed = _resolve_seed(args)
    timer = _Timer()
    config = scenemod.SceneConfig()
    if args.config:
        config = scenemod.SceneConfig.from_json(_load_json(args.config))
    with timer.stage("generate"):
        records = datasets.write_scene_dataset(args.out, args.count, seed, config)
    manifest = _manifest(
        args, "gen-scenes", config.to_json(),
        {"config_path": args.config},
        {"out_dir": args.out, "count": len(records)},
        timer, seed,
    )
    _write_manifest(os.path.join(args.out, "manifest.json"), manifest)
    print(json.dumps({"out_dir": args.out, "count": len(records)}))
    return EXIT_OK


def cmd_gen_iqtt(args):
    seed = _resolve_seed(args)
    timer = _Timer()
    config = iqtt.IqttConfig()
    if args.config:
        config = iqtt.IqttConfig.from_json(_load_json(args.config))
    with timer.stage("generate"):
        records = datasets.write_iqtt_dataset(
            args.out, args.count, seed, config, render_images=not args.no_images
        )
    manifest = _manifest(
        args, "gen-iqtt", config.to_json(),
        {"config_path": args.config},
        {"out_dir": args.out, "count": len(records)},
        timer, seed,
    )
    _write_manifest(os.path.join(args.out, "manifest.json"), manifest)
    print(json.dumps({"out_dir": args.out, "count": len(records)}))
    return EXIT_OK


def cmd_render(args):
    seed = _resolve_seed(args)
    timer = _Timer()
    with timer.stage("load"):
        spec = scenemod.scene_from_json(_load_json(args.scene, "scene"))
        camera = None
        if args.camera:
            camera = geometry.camera_from_json(_load_json(args.camera, "camera"))
    with timer.stage("render"):
        rgb, depth, normals = datasets.render_scene_outputs(spec, camera)
    prefix = args.out
    with timer.stage("write"):
        fileio.write_image_png(prefix + ".rgb.png", rgb)
        fileio.write_pfm(prefix + ".depth.pfm", depth)
        fileio.write_pfm(prefix + ".normals.pfm", normals)
    manifest = _manifest(
        args, "render", {"scene": args.scene, "camera": args.camera},
        {"scene": args.scene, "camera": args.camera},
        {
            "rgb": prefix + ".rgb.png",
            "depth": prefix + ".depth.pfm",
            "normals": prefix + ".normals.pfm",
        },
        timer, seed,
    )
    _write_manifest(prefix + ".manifest.json", manifest)
    print(json.dumps({"rgb": prefix + ".rgb.png", "depth": prefix + ".depth.pfm",
                      "normals": prefix + ".normals.pfm"}))
    return EXIT_OK


def _gradcheck_scene(rng, size):
    """Random flat-frame camera, one point light, uniform albedo."""
    camera = geometry.make_camera(
        position=(0.0, 0.0, 0.0),
        look_at=(0.0, 0.0, -1.0),
        up=(0.0, 1.0, 0.0),
        focal_mm=rng.uniform(18.0, 25.0),
        sensor_mm=24.0,
        resolution=(size, size),
    )
    depth = rng.uniform(1.0, 3.0, size=(size, size))
    light = shading.PointLight(
        position=rng.uniform([-0.5, -0.5, -0.3], [0.5, 0.5, 0.5]),
        color=rng.uniform(0.5, 1.0, size=3),
        k_l=rng.uniform(0.2, 1.0),
        k_q=rng.uniform(0.2, 1.0),
    )
    lights = shading.LightingRig(ambient=rng.uniform(0.0, 0.2, size=3),
                                 lights=(light,))
    material = shading.Material(albedo=rng.uniform(0.2, 1.0, size=3))
    return depth, camera, material, lights


def gradcheck_trial(trial_seed, size, kink_margin=1e-3):
    """One analytic-vs-finite-difference comparison; returns (errors, excluded).

    The scalar probe loss is sum(U * image) with a small random U, so the
    absolute finite-difference noise stays below the 1e-8 denominator
    floor of the relative-error metric. Depth pixels within the dilated
    stencil of a clamp margin < kink_margin are excluded (central
    differences would straddle the kink there).
    """
    rng = np.random.default_rng(np.random.SeedSequence([trial_seed & (2**64 - 1)]))
    depth, camera, material, lights = _gradcheck_scene(rng, size)
    upstream = rng.normal(size=(size, size, 3)) / depth.size / 3.0

    analytic = gradients.render_backward(depth, camera, material, lights, upstream)

    def loss(d):
        return float(np.sum(shading.render(d, camera, material, lights) * upstream))

    eps = gradients.fd_epsilon(depth)
    fd = gradients.finite_diff_grad(loss, depth, eps)

    margins = gradients.clamp_margins(depth, camera, material, lights)
    kink = margins < kink_margin
    # a clamp at pixel p is driven by depth in the cross around p
    excluded = np.zeros_like(kink)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            excluded |= np.roll(np.roll(kink, dr, axis=0), dc, axis=1)
    keep = ~excluded

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
    rel = np.abs(analytic - fd) / denom
    return rel[keep], int(excluded.sum())


def run_gradcheck(seed, sizes, trials, tolerance):
    all_rel = []
    excluded_total = 0
    rng = np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1)]))
    trial_seeds = []
    for t in range(trials):
        trial_seed = datasets.child_seed(seed, t)
        trial_seeds.append(trial_seed)
        size = int(sizes[int(rng.integers(len(sizes)))])
        rel, excluded = gradcheck_trial(trial_seed, size)
        all_rel.append(rel)
        excluded_total += excluded
    rel = np.concatenate(all_rel) if all_rel else np.zeros(0)
    max_rel = float(rel.max()) if rel.size else 0.0
    mean_rel = float(rel.mean()) if rel.size else 0.0
    return {
        "seeds": trial_seeds,
        "max_rel_err": max_rel,
        "mean_rel_err": mean_rel,
        "kink_excluded_count": excluded_total,
        "pass": bool(max_rel <= tolerance),
    }


def cmd_gradcheck(args):
    seed = _resolve_seed(args)
    timer = _Timer()
    sizes = [int(s) for s in args.sizes.split(",") if s]
    if not sizes or any(s < 2 for s in sizes):
        raise InvalidParam(f"--sizes must list integers >= 2, got {args.sizes!r}")
    with timer.stage("gradcheck"):
        report = run_gradcheck(seed, sizes, args.trials, args.tolerance)
    report["manifest"] = _manifest(
        args, "gradcheck",
        {"sizes": sizes, "trials": args.trials, "tolerance": args.tolerance},
        {}, {}, timer, seed,
    )
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK if report["pass"] else EXIT_NUMERIC


def _bench_problem(resolution, seed=11):
    rng = np.random.default_rng(seed)
    camera = geometry.make_camera(
        position=(0, 0, 0), look_at=(0, 0, -1), up=(0, 1, 0),
        focal_mm=20.0, sensor_mm=24.0, resolution=(resolution, resolution),
    )
    rr, cc = np.meshgrid(np.arange(resolution), np.arange(resolution), indexing="ij")
    depth = 2.0 + 0.3 * np.sin(rr / 7.0) * np.cos(cc / 9.0)
    material = shading.Material(albedo=(0.8, 0.75, 0.7))
    lights = shading.LightingRig(
        ambient=(0.1, 0.1, 0.1),
        lights=(shading.PointLight(position=(0.5, 0.5, 0.5),
                                   color=(1, 1, 1), k_l=0.0, k_q=0.25),),
    )
    upstream = rng.normal(size=(resolution, resolution, 3))
    return depth, camera, material, lights, upstream


def _time_loop(fn, iters):
    samples = []
    fn()  # warm-up
    for _ in range(iters):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    samples = np.sort(np.asarray(samples))
    return {
        "median_ms": float(np.median(samples) * 1e3),
        "p95_ms": float(samples[int(0.95 * (len(samples) - 1))] * 1e3),
    }


def cmd_bench(args):
    seed = _resolve_seed(args)
    timer = _Timer()
    depth, camera, material, lights, upstream = _bench_problem(args.resolution)

    def forward():
        shading.render(depth, camera, material, lights)

    def forward_backward():
        shading.render(depth, camera, material, lights)
        gradients.render_backward(depth, camera, material, lights, upstream)

    with timer.stage("bench"):
        runs = {}
        for label, threads in (("single_thread", 1), ("multi_thread", os.cpu_count())):
            runs[label] = {
                "threads": threads,
                "forward": _time_loop(forward, args.iters),
                "forward_backward": _time_loop(forward_backward, args.iters),
            }
    report = {
        "resolution": args.resolution,
        "iters": args.iters,
        "build_profile": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
        **runs,
        "note": "compute is vectorized single-process; thread setting does not "
                "change results",
    }
    report["manifest"] = _manifest(
        args, "bench", {"resolution": args.resolution, "iters": args.iters},
        {}, {}, timer, seed,
    )
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_reconstruct(args):
    seed = _resolve_seed(args)
    timer = _Timer()
    with timer.stage("load"):
        spec = scenemod.scene_from_json(_load_json(args.scene, "scene"))
        camera = spec.camera
        if args.target.endswith(".pfm"):
            target = fileio.read_pfm(args.target).astype(np.float64)
        else:
            target = fileio.read_image_png(args.target)
    cfg = recon.ReconConfig(
        max_iters=args.iters,
        step_size=args.step_size,
        smoothness_weight=args.smoothness,
        optimizer=args.optimizer,
    )
    with timer.stage("optimize"):
        report = recon.reconstruct_depth(
            target, camera, spec.material, spec.lights, cfg,
            room_diagonal=spec.room_diagonal,
        )
    prefix = args.out
    with timer.stage("write"):
        fileio.write_pfm(prefix + ".depth.pfm", report.depth)
        with open(prefix + ".loss.csv", "w") as f:
            f.write("iteration,data,smoothness\n")
            for i, (d, s) in enumerate(report.loss_trace):
                f.write(f"{i},{d!r},{s!r}\n")
        field = surfels.build_surfel_field(report.depth, camera, spec.material.albedo)
        rendered = shading.shade(field, camera, spec.lights)
        _write_side_by_side(prefix + ".summary.png", target, rendered,
                            report.depth, field.normals)
    payload = {
        "depth": prefix + ".depth.pfm",
        "loss_csv": prefix + ".loss.csv",
        "summary": prefix + ".summary.png",
        "best_iteration": report.best_iteration,
        "final_data_term": report.loss_trace[report.best_iteration][0],
        "final_smoothness_term": report.loss_trace[report.best_iteration][1],
        "iterations_run": len(report.loss_trace),
        "init_depth": report.init_depth,
    }
    manifest = _manifest(
        args, "reconstruct",
        {"iters": args.iters, "step_size": args.step_size,
         "smoothness": args.smoothness, "optimizer": args.optimizer},
        {"target": args.target, "scene": args.scene},
        payload, timer, seed,
    )
    _write_manifest(prefix + ".manifest.json", manifest)
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


def _write_side_by_side(path, target, rendered, depth, normals):
    """target | rendered | depth (normalized gray) | normals, one PNG."""
    d = depth - depth.min()
    d = d / d.max() if d.max() > 0 else d
    depth_rgb = np.repeat(d[..., None], 3, axis=-1)
    normals_rgb = (normals + 1.0) * 0.5
    panel = np.concatenate([
        np.clip(target, 0, 1), np.clip(rendered, 0, 1), depth_rgb, normals_rgb,
    ], axis=1)
    fileio.write_image_png(path, panel)


def cmd_metrics(args):
    seed = _resolve_seed(args)
    timer = _Timer()
    payload = {}
    with timer.stage("compute"):
        if args.points_a and args.points_b:
            a = fileio.read_pointset_txt(args.points_a)
            b = fileio.read_pointset_txt(args.points_b)
            payload["chamfer"] = metrics.chamfer(a, b)
            payload["hausdorff"] = metrics.hausdorff(a, b)
            if args.directed:
                payload["hausdorff_forward"] = metrics.hausdorff(a, b, directed="forward")
                payload["hausdorff_reverse"] = metrics.hausdorff(a, b, directed="reverse")
        elif args.a and args.b and args.camera:
            camera = geometry.camera_from_json(_load_json(args.camera, "camera"))
            d1 = fileio.read_pfm(args.a).astype(np.float64)
            d2 = fileio.read_pfm(args.b).astype(np.float64)
            p1 = surfels.backproject(d1, camera).reshape(-1, 3)
            p2 = surfels.backproject(d2, camera).reshape(-1, 3)
            payload["chamfer"] = metrics.chamfer(p1, p2)
            payload["hausdorff"] = metrics.hausdorff(p1, p2)
            if args.directed:
                payload["hausdorff_forward"] = metrics.hausdorff(p1, p2, directed="forward")
                payload["hausdorff_reverse"] = metrics.hausdorff(p1, p2, directed="reverse")
            payload["mse"] = metrics.mse_depth(d1, d2)
        else:
            raise InvalidParam(
                "metrics needs either --points-a/--points-b or --a/--b/--camera"
            )
    payload["manifest"] = _manifest(
        args, "metrics",
        {"directed": args.directed},
        {"a": args.a or args.points_a, "b": args.b or args.points_b,
         "camera": args.camera},
        {}, timer, seed,
    )
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


# ------------------------------------------------------- array boundary


def _load_npy_f64(path, what, expect_ndim):
    try:
        arr = np.load(path)
    except ValueError as exc:
        raise InvalidParam(f"{what}: not a valid .npy file: {exc}") from exc
    if arr.dtype != np.float64:
        raise InvalidParam(f"{what}: expected dtype float64, got {arr.dtype}")
    if arr.ndim not in expect_ndim:
        raise InvalidParam(
            f"{what}: expected {expect_ndim}-dimensional array, got {arr.ndim}"
        )
    return np.ascontiguousarray(arr)


def _ffi_common(args):
    camera = geometry.camera_from_json(_load_json(args.camera, "camera"))
    material = shading.material_from_json(_load_json(args.material, "material"))
    lights = shading.lights_from_json(_load_json(args.lights, "lights"))
    return camera, material, lights


def cmd_ffi_render(args):
    camera, material, lights = _ffi_common(args)
    depth = _load_npy_f64(args.depth, "depth", (2, 3))
    if depth.ndim == 2:
        out = shading.render(depth, camera, material, lights)
    else:
        out = np.stack([
            shading.render(d, camera, material, lights) for d in depth
        ])
    np.save(args.out, out)
    print(json.dumps({"out": args.out, "shape": list(out.shape)}))
    return EXIT_OK


def cmd_ffi_backward(args):
    camera, material, lights = _ffi_common(args)
    depth = _load_npy_f64(args.depth, "depth", (2,))
    upstream = _load_npy_f64(args.upstream, "upstream", (3,))
    grad = gradients.render_backward(depth, camera, material, lights, upstream)
    np.save(args.out, grad)
    print(json.dumps({"out": args.out, "shape": list(grad.shape)}))
    return EXIT_OK


def cmd_ffi_normals(args):
    camera = geometry.camera_from_json(_load_json(args.camera, "camera"))
    depth = _load_npy_f64(args.depth, "depth", (2,))
    positions = surfels.backproject(depth, camera)
    normals, _ = surfels.estimate_normals(positions)
    np.save(args.out, normals)
    print(json.dumps({"out": args.out, "shape": list(normals.shape)}))
    return EXIT_OK


def cmd_ffi_chamfer(args):
    a = _load_npy_f64(args.a, "A", (2,))
    b = _load_npy_f64(args.b, "B", (2,))
    if a.shape[1] != 3 or b.shape[1] != 3:
        raise InvalidParam("point arrays must be (N, 3)")
    print(json.dumps({"chamfer": metrics.chamfer(a, b)}))
    return EXIT_OK


# ----------------------------------------------------------------- main


def build_parser():
    parser = argparse.ArgumentParser(
        prog="surfelgrad",
        description="Differentiable surfel rendering toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="base RNG seed (SURFELGRAD_SEED overrides)")
    common.add_argument("--threads", type=int, default=os.cpu_count(),
                        help="parallelism cap (informational; results are "
                             "thread-count independent)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenes", parents=[common],
                       help="generate a rendered room-scene dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--config", default=None, help="SceneConfig JSON path")
    p.set_defaults(fn=cmd_gen_scenes)

    p = sub.add_parser("gen-iqtt", parents=[common],
                       help="generate mental-rotation questions")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--config", default=None, help="IqttConfig JSON path")
    p.add_argument("--no-images", action="store_true",
                   help="emit labels/provenance only")
    p.set_defaults(fn=cmd_gen_iqtt)

    p = sub.add_parser("render", parents=[common],
                       help="trace + shade a scene JSON")
    p.add_argument("--scene", required=True)
    p.add_argument("--camera", default=None,
                   help="camera JSON overriding the scene's own")
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="analytic vs finite-difference gradients")
    p.add_argument("--sizes", default="8,12,16,24,32")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("bench", parents=[common], help="render throughput")
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--iters", type=int, default=50)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("reconstruct", parents=[common],
                       help="inverse-render a depth map from one image")
    p.add_argument("--target", required=True, help="target PNG or PFM")
    p.add_argument("--scene", required=True, help="scene JSON (lights/material/camera)")
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--step-size", type=float, default=0.02)
    p.add_argument("--smoothness", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=recon.OPTIMIZERS, default="adaptive")
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("metrics", parents=[common],
                       help="chamfer/hausdorff/mse between depth maps or point sets")
    p.add_argument("--a", default=None, help="depth PFM")
    p.add_argument("--b", default=None, help="depth PFM")
    p.add_argument("--camera", default=None, help="camera JSON for backprojection")
    p.add_argument("--points-a", default=None, help="point-set text file")
    p.add_argument("--points-b", default=None, help="point-set text file")
    p.add_argument("--directed", action="store_true",
                   help="also report the directed Hausdorff variants")
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("ffi-render", parents=[common],
                       help="render from a depth .npy (array boundary)")
    p.add_argument("--depth", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--material", required=True)
    p.add_argument("--lights", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ffi_render)

    p = sub.add_parser("ffi-backward", parents=[common],
                       help="depth gradient from an upstream .npy")
    p.add_argument("--depth", required=True)
    p.add_argument("--upstream", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--material", required=True)
    p.add_argument("--lights", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ffi_backward)

    p = sub.add_parser("ffi-normals", parents=[common],
                       help="estimated normals from a depth .npy")
    p.add_argument("--depth", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ffi_normals)

    p = sub.add_parser("ffi-chamfer", parents=[common],
                       help="chamfer distance between two (N,3) .npy arrays")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(fn=cmd_ffi_chamfer)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (Diverged, NonFiniteOutput, LightAtSurfel, PlacementFailure,
            SamplingFailure) as exc:
        _err(exc)
        return EXIT_NUMERIC
    except (InvalidParam, SurfelError) as exc:
        _err(exc)
        return EXIT_CONFIG
    except OSError as exc:
        _err(exc)
        return EXIT_IO


def _err(exc):
    line = json.dumps({"error": type(exc).__name__, "message": str(exc)})
    print(line, file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
