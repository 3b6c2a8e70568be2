"""Command line front end: forge data, render, train, sample, eval, sweep.

Every subcommand resolves a RunConfig from an optional JSON file plus
explicit flags (flags win), prints its plan under --dry-run without
touching disk, and reports failures as one-line JSON records on stderr.
Missing inputs exit 2; runtime failures exit 1.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .bvh import build_bvh
from .composite import CompositeInputs, composite, load_rgb, save_rgb
from .config import RunConfig, config_from_dict, merge_flags
from .forge import (ForgeConfig, forge_dataset, forge_tracks, make_mesh_corpus,
                    manifest_path, read_manifest)
from .mesh import load_obj, settle
from .metrics import aggregate, evaluate_pair
from .render import render_mask, render_preview, render_triplet, write_triplet
from .scene import LightParams, default_camera

TRACK_IDS = (1, 2, 3)


class UsageError(Exception):
    """Bad invocation or missing input; exits 2, not 1."""


def _emit(record, stream=None):
    print(json.dumps(record, indent=2, sort_keys=True), file=stream or sys.stdout)


def _resolve(ns, keys):
    """Config file overlaid with explicit flags; returns (config, given keys)."""
    given = set()
    base = RunConfig()
    if ns.config:
        path = Path(ns.config)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(raw, dict):
            raise UsageError(f"config file {path} must hold a JSON object")
        try:
            base = config_from_dict(raw)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"config file {path}: {exc}")
        given |= set(raw) - {"version"}
    overrides = {k: getattr(ns, k, None) for k in keys}
    given |= {k for k, v in overrides.items() if v is not None}
    try:
        return merge_flags(base, overrides), given
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc))


def _light_from(ns):
    return LightParams(theta=ns.theta, phi=ns.phi, size=ns.size,
                       intensity=ns.intensity)


def _forge_config(config):
    return ForgeConfig(out_dir=Path(config.dataset_root), grid=config.grid,
                       resolution=(config.resolution, config.resolution),
                       workers=config.workers or None)


def _load_meshes(directory):
    paths = sorted(Path(directory).glob("*.obj"))
    if not paths:
        raise UsageError(f"no .obj meshes under {directory}")
    return [settle(load_obj(p)) for p in paths]


def _training_corpus(config):
    if config.mesh_dir:
        return _load_meshes(config.mesh_dir)
    rng = np.random.default_rng(config.seed)
    return make_mesh_corpus(config.mesh_count, rng)


def _track_pools(config):
    """Per-track mesh pools: track1/2/3 subdirs, a flat dir split by
    track_meshes counts (shared when too small), or generated primitives."""
    counts = config.track_meshes
    edges = np.cumsum((0,) + tuple(counts))
    if config.mesh_dir:
        root = Path(config.mesh_dir)
        subdirs = {t: root / f"track{t}" for t in TRACK_IDS}
        if all(d.is_dir() for d in subdirs.values()):
            return {t: _load_meshes(d) for t, d in subdirs.items()}
        meshes = _load_meshes(root)
        if len(meshes) >= sum(counts):
            return {t: meshes[edges[t - 1]:edges[t]] for t in TRACK_IDS}
        return {t: meshes for t in TRACK_IDS}
    rng = np.random.default_rng(config.seed)
    corpus = make_mesh_corpus(sum(counts), rng)
    return {t: corpus[edges[t - 1]:edges[t]] for t in TRACK_IDS}


# ---------------------------------------------------------------------------
# subcommands

FORGE_KEYS = ("seed", "workers", "mesh_dir", "dataset_root", "resolution",
              "grid", "train_count", "mesh_count")


def cmd_forge(ns):
    config, _ = _resolve(ns, FORGE_KEYS)
    root = Path(config.dataset_root)
    plan = {
        "command": "forge",
        "split": "train",
        "count": config.train_count,
        "resolution": [config.resolution, config.resolution],
        "grid": config.grid,
        "meshes": config.mesh_dir or f"{config.mesh_count} generated primitives",
        "seed": config.seed,
        "out": str(root),
        "manifest": str(manifest_path(root, "train.manifest.jsonl")),
    }
    if ns.dry_run:
        _emit(plan)
        return 0
    meshes = _training_corpus(config)
    manifest = forge_dataset(meshes, config.train_count,
                             np.random.default_rng(config.seed + 1),
                             _forge_config(config), split="train")
    _emit({"command": "forge", "entries": len(manifest.entries),
           "failures": len(manifest.failures), "manifest": plan["manifest"]})
    return 0


TRACKS_KEYS = ("seed", "workers", "mesh_dir", "dataset_root", "resolution",
               "grid", "track_meshes")

# entries per mesh on each benchmark track
_TRACK_GRID = {1: {"theta": [30], "phi": [0], "size": [2, 4, 8]},
               2: {"theta": [35], "phi": list(range(0, 360, 20)), "size": [2]},
               3: {"theta": list(range(5, 50, 5)), "phi": [0], "size": [2]}}


def cmd_tracks(ns):
    config, _ = _resolve(ns, TRACKS_KEYS)
    root = Path(config.dataset_root)
    pools = _track_pools(config)
    plan = {"command": "tracks", "out": str(root),
            "resolution": [config.resolution, config.resolution],
            "grid": config.grid, "seed": config.seed,
            "manifest": str(manifest_path(root, "tracks.manifest.jsonl"))}
    for t in TRACK_IDS:
        grid = _TRACK_GRID[t]
        per_mesh = len(grid["theta"]) * len(grid["phi"]) * len(grid["size"])
        plan[f"track{t}"] = dict(grid, meshes=len(pools[t]),
                                 entries=per_mesh * len(pools[t]))
    if ns.dry_run:
        _emit(plan)
        return 0
    manifest = forge_tracks(pools, _forge_config(config), seed=config.seed)
    counts = {}
    for entry in manifest.entries:
        counts[entry.split] = counts.get(entry.split, 0) + 1
    _emit({"command": "tracks", "entries": counts,
           "failures": len(manifest.failures), "manifest": plan["manifest"]})
    return 0


RENDER_KEYS = ("seed", "workers", "resolution", "grid")


def cmd_render(ns):
    config, _ = _resolve(ns, RENDER_KEYS)
    mesh_path = Path(ns.mesh)
    if not mesh_path.exists():
        raise UsageError(f"mesh not found: {mesh_path}")
    light = _light_from(ns)
    stem = ns.stem or mesh_path.stem
    out = Path(ns.out)
    names = [f"{stem}.preview.png", f"{stem}.mask.png", f"{stem}.shadow.png",
             f"{stem}.json"]
    plan = {"command": "render", "mesh": str(mesh_path),
            "light": json.loads(light.to_json()),
            "resolution": [config.resolution, config.resolution],
            "grid": config.grid, "seed": config.seed,
            "writes": [str(out / n) for n in names]}
    if ns.dry_run:
        _emit(plan)
        return 0
    mesh = settle(load_obj(mesh_path))
    camera = default_camera((config.resolution, config.resolution))
    triplet = render_triplet(mesh, camera, light, grid=config.grid,
                             seed=config.seed, workers=config.workers or None)
    paths = write_triplet(out, stem, triplet)
    _emit({"command": "render",
           "writes": sorted(str(p) for p in paths.values())})
    return 0


TRAIN_KEYS = ("seed", "workers", "dataset_root", "report_dir", "objective",
              "cond_mode", "include_intensity", "iterations", "batch_size",
              "lr")


def cmd_train(ns):
    from .diffusion import (DenoiserConfig, TrainConfig, load_run,
                            load_training_set, make_run, save_run, train_run)

    config, given = _resolve(ns, TRAIN_KEYS)
    man = manifest_path(Path(config.dataset_root), "train.manifest.jsonl")
    if not man.exists():
        raise UsageError(f"training manifest not found: {man}")
    out = Path(ns.out) if ns.out else (
        Path(config.report_dir) / f"model-{config.objective}.ckpt")
    plan = {"command": "train", "data": str(man),
            "objective": config.objective, "cond_mode": config.cond_mode,
            "include_intensity": config.include_intensity,
            "iterations": config.iterations, "batch_size": config.batch_size,
            "lr": config.lr, "seed": config.seed, "limit": ns.limit,
            "resume": ns.resume, "checkpoint": str(out)}
    if ns.dry_run:
        _emit(plan)
        return 0
    data = load_training_set(man, limit=ns.limit)
    if ns.resume:
        if not Path(ns.resume).exists():
            raise UsageError(f"checkpoint not found: {ns.resume}")
        state = load_run(ns.resume)
        if "iterations" in given:
            state.train = dataclasses.replace(state.train,
                                              iterations=config.iterations)
    else:
        # the model resolution follows the dataset, not the render setting
        model_config = DenoiserConfig(
            resolution=data.resolution, objective=config.objective,
            cond_mode=config.cond_mode,
            include_intensity=config.include_intensity)
        train_config = TrainConfig(lr=config.lr, batch_size=config.batch_size,
                                   iterations=config.iterations)
        state = make_run(model_config, train_config, seed=config.seed)

    def log(step, loss):
        if ns.log_every and step % ns.log_every == 0:
            print(f"step {step} loss {loss:.6f}", file=sys.stderr)

    state = train_run(data, state=state, log=log)
    save_run(state, out)
    _emit({"command": "train", "steps": state.step,
           "final_loss": state.loss_history[-1], "checkpoint": str(out)})
    return 0


SAMPLE_KEYS = ("seed", "workers")


def cmd_sample(ns):
    from .diffusion import load_run, object_channel, sample

    import torch

    config, _ = _resolve(ns, SAMPLE_KEYS)
    for path, label in ((ns.ckpt, "checkpoint"), (ns.mesh, "mesh")):
        if not Path(path).exists():
            raise UsageError(f"{label} not found: {path}")
    light = _light_from(ns)
    stem = ns.stem or Path(ns.mesh).stem
    out = Path(ns.out)
    plan = {"command": "sample", "checkpoint": ns.ckpt, "mesh": ns.mesh,
            "light": json.loads(light.to_json()), "steps": ns.steps,
            "seed": config.seed, "writes": [str(out / f"{stem}.shadow.png")]}
    if ns.dry_run:
        _emit(plan)
        return 0
    state = load_run(ns.ckpt)
    model = state.model
    res = model.config.resolution
    mesh = settle(load_obj(ns.mesh))
    bvh = build_bvh(mesh)
    camera = default_camera((res, res))
    workers = config.workers or None
    mask = render_mask(mesh, bvh, camera, workers=workers).astype(np.float64)
    # zero shadow: the cutout channel only needs the object pixels
    preview = render_preview(mesh, bvh, camera, light,
                             shadow=np.zeros_like(mask), workers=workers)
    obj = object_channel(preview, mask)
    to = lambda a: torch.from_numpy(a).to(model.dtype)[None, None]
    pred = sample(model, to(mask), to(obj), [light], ns.steps,
                  seed=config.seed)
    shadow = pred[0, 0].double().numpy()
    out.mkdir(parents=True, exist_ok=True)
    from PIL import Image

    data = np.rint(np.clip(shadow, 0.0, 1.0) * 65535.0).astype(np.uint16)
    Image.fromarray(data).save(out / f"{stem}.shadow.png")
    _emit({"command": "sample", "writes": plan["writes"],
           "mean_shadow": float(shadow.mean())})
    return 0


EVAL_KEYS = ("seed", "dataset_root", "report_dir")


def cmd_eval(ns):
    from .diffusion import load_run
    from .diffusion.ablation import _load_track, _predict, _track_noise

    config, _ = _resolve(ns, EVAL_KEYS)
    if not Path(ns.ckpt).exists():
        raise UsageError(f"checkpoint not found: {ns.ckpt}")
    man = manifest_path(Path(config.dataset_root), "tracks.manifest.jsonl")
    if not man.exists():
        raise UsageError(f"tracks manifest not found: {man}")
    tags = [ns.track] if ns.track else [f"track{t}" for t in TRACK_IDS]
    out = Path(ns.out) if ns.out else Path(config.report_dir) / "eval.json"
    plan = {"command": "eval", "checkpoint": ns.ckpt, "tracks": tags,
            "steps": ns.steps, "seed": config.seed, "out": str(out)}
    if ns.dry_run:
        _emit(plan)
        return 0
    state = load_run(ns.ckpt)
    model = state.model
    manifest = read_manifest(man)
    samples = []
    summary = {}
    for tag in tags:
        track = _load_track(manifest, tag)
        noise = _track_noise(track, config.seed, model.dtype)
        pred = _predict(model, track, ns.steps, noise, ns.batch)
        rows = [evaluate_pair(pred[i], track["shadows"][i])
                for i in range(track["count"])]
        samples += [(tag, config.seed, row) for row in rows]
        summary[tag] = float(np.mean([row["iou"] for row in rows]))
    report = aggregate(samples)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json() + "\n", encoding="utf-8")
    _emit({"command": "eval", "steps": ns.steps, "iou": summary,
           "out": str(out)})
    return 0


def _load_gray(path):
    from PIL import Image

    img = Image.open(path)
    scale = 65535.0 if img.mode.startswith("I") else 255.0
    return np.asarray(img, dtype=np.float64) / scale


def cmd_composite(ns):
    for path in (ns.object, ns.mask, ns.shadow, ns.background):
        if not Path(path).exists():
            raise UsageError(f"input not found: {path}")
    plan = {"command": "composite", "object": ns.object, "mask": ns.mask,
            "shadow": ns.shadow, "background": ns.background,
            "intensity": ns.intensity, "writes": [ns.out]}
    if ns.dry_run:
        _emit(plan)
        return 0
    inputs = CompositeInputs(
        object_image=load_rgb(ns.object),
        mask=(_load_gray(ns.mask) > 0.5).astype(np.float64),
        shadow=_load_gray(ns.shadow),
        background=load_rgb(ns.background),
        intensity=ns.intensity,
    )
    out = Path(ns.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_rgb(out, composite(inputs))
    _emit({"command": "composite", "writes": [str(out)]})
    return 0


SWEEP_KEYS = ("seed", "dataset_root", "report_dir", "objectives", "steps",
              "sample_seeds", "iterations", "batch_size", "lr", "resolution")

# config key -> AblationProfile field
_PROFILE_MAP = {"objectives": "objectives", "steps": "steps",
                "sample_seeds": "seeds", "iterations": "iterations",
                "batch_size": "batch_size", "lr": "lr",
                "resolution": "resolution"}


def cmd_sweep(ns):
    from .diffusion import full_profile, save_run, smoke_profile
    from .diffusion.ablation import run_ablation

    config, given = _resolve(ns, SWEEP_KEYS)
    profile = smoke_profile() if ns.profile == "smoke" else full_profile()
    live = {field: getattr(config, key) for key, field in _PROFILE_MAP.items()
            if key in given}
    if live:
        try:
            profile = dataclasses.replace(profile, **live)
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc))
    root = Path(config.dataset_root)
    out = Path(config.report_dir)
    plan = {
        "command": "sweep", "profile": profile.name, "data": str(root),
        "out": str(out), "objectives": list(profile.objectives),
        "steps": list(profile.steps), "seeds": profile.seeds,
        "iterations": profile.iterations, "resolution": profile.resolution,
        "cells": len(profile.objectives) * len(profile.steps) * 3,
        "models": sorted(
            list(profile.objectives)
            + (["rf_control"]
               if profile.control_iterations
               and profile.control_iterations > profile.iterations
               and "rf" in profile.objectives else [])
            + (["rf_intensity"] if profile.train_intensity_variant else [])),
    }
    if ns.dry_run:
        _emit(plan)
        return 0

    def log(message):
        print(message, file=sys.stderr)

    report, models = run_ablation(root, out_dir=out, profile=profile, log=log)
    for name, state in models.items():
        save_run(state, out / f"model-{name}.ckpt")
    _emit({"command": "sweep", "report": str(out / "report.json"),
           "trend": report.trend, "control": report.control})
    return 0


# ---------------------------------------------------------------------------
# parser

def _csv_names(text):
    items = tuple(s.strip() for s in text.split(",") if s.strip())
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return items


def _csv_ints(text):
    try:
        return tuple(int(s) for s in _csv_names(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")


def _light_flags(sub):
    sub.add_argument("--theta", type=float, default=30.0,
                     help="polar angle, degrees")
    sub.add_argument("--phi", type=float, default=0.0,
                     help="azimuth, degrees")
    sub.add_argument("--size", type=float, default=2.0, help="light size")
    sub.add_argument("--intensity", type=float, default=1.0,
                     help="shadow intensity")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--workers", type=int,
                        help="worker cap (also capped by UMBRA_THREADS)")
    common.add_argument("--dry-run", action="store_true",
                        help="print the resolved plan and write nothing")

    parser = argparse.ArgumentParser(
        prog="umbra",
        description="Soft-shadow rendering, forging, training, and evaluation.")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("forge", parents=[common],
                          help="render a training split")
    sub.add_argument("--meshes", "--mesh-dir", dest="mesh_dir",
                     help="mesh directory (.obj); omit to generate primitives")
    sub.add_argument("--out", dest="dataset_root", help="dataset root")
    sub.add_argument("--count", dest="train_count", type=int,
                     help="entries to render")
    sub.add_argument("--mesh-count", type=int,
                     help="generated corpus size when --meshes is omitted")
    sub.add_argument("--resolution", type=int)
    sub.add_argument("--grid", type=int, help="light samples per pixel edge")
    sub.set_defaults(func=cmd_forge)

    sub = subs.add_parser("tracks", parents=[common],
                          help="render the three benchmark tracks")
    sub.add_argument("--meshes", "--mesh-dir", dest="mesh_dir",
                     help="mesh directory; track1/2/3 subdirs or a flat dir "
                          "split by --track-meshes")
    sub.add_argument("--out", dest="dataset_root", help="dataset root")
    sub.add_argument("--track-meshes", dest="track_meshes", type=_csv_ints,
                     help="pool sizes per track, e.g. 50,15,15")
    sub.add_argument("--resolution", type=int)
    sub.add_argument("--grid", type=int)
    sub.set_defaults(func=cmd_tracks)

    sub = subs.add_parser("render", parents=[common],
                          help="render one triplet with a sidecar JSON")
    sub.add_argument("--mesh", required=True, help=".obj file")
    _light_flags(sub)
    sub.add_argument("--out", default="render", help="output directory")
    sub.add_argument("--stem", help="output stem (default: mesh name)")
    sub.add_argument("--resolution", type=int)
    sub.add_argument("--grid", type=int)
    sub.set_defaults(func=cmd_render)

    sub = subs.add_parser("train", parents=[common],
                          help="train a denoiser on a forged split")
    sub.add_argument("--data", dest="dataset_root", help="dataset root")
    sub.add_argument("--objective", choices=("eps", "sample", "v", "rf"))
    sub.add_argument("--cond-mode", dest="cond_mode",
                     choices=("scalar", "blob", "both"))
    sub.add_argument("--include-intensity", dest="include_intensity",
                     action=argparse.BooleanOptionalAction,
                     help="condition on intensity as a fourth scalar")
    sub.add_argument("--iterations", type=int)
    sub.add_argument("--batch-size", dest="batch_size", type=int)
    sub.add_argument("--lr", type=float)
    sub.add_argument("--limit", type=int, help="cap on training entries")
    sub.add_argument("--out", help="checkpoint path")
    sub.add_argument("--resume", help="checkpoint to continue from")
    sub.add_argument("--report-dir", dest="report_dir")
    sub.add_argument("--log-every", type=int, default=100)
    sub.set_defaults(func=cmd_train)

    sub = subs.add_parser("sample", parents=[common],
                          help="sample a shadow map for a mesh")
    sub.add_argument("--ckpt", required=True, help="trained checkpoint")
    sub.add_argument("--mesh", required=True, help=".obj file")
    _light_flags(sub)
    sub.add_argument("--steps", type=int, default=20)
    sub.add_argument("--out", default="samples", help="output directory")
    sub.add_argument("--stem", help="output stem (default: mesh name)")
    sub.set_defaults(func=cmd_sample)

    sub = subs.add_parser("eval", parents=[common],
                          help="score a checkpoint on the benchmark tracks")
    sub.add_argument("--ckpt", required=True)
    sub.add_argument("--data", dest="dataset_root", help="dataset root")
    sub.add_argument("--track", choices=("track1", "track2", "track3"),
                     help="limit to one track")
    sub.add_argument("--steps", type=int, default=20)
    sub.add_argument("--batch", type=int, default=16)
    sub.add_argument("--out", help="metric report path (JSON)")
    sub.add_argument("--report-dir", dest="report_dir")
    sub.set_defaults(func=cmd_eval)

    sub = subs.add_parser("composite", parents=[common],
                          help="composite object + shadow over a background")
    sub.add_argument("--object", required=True, help="object RGB image")
    sub.add_argument("--mask", required=True, help="object mask image")
    sub.add_argument("--shadow", required=True, help="shadow map image")
    sub.add_argument("--background", required=True, help="background RGB")
    sub.add_argument("--intensity", type=float, default=1.0)
    sub.add_argument("--out", required=True, help="output PNG")
    sub.set_defaults(func=cmd_composite)

    sub = subs.add_parser("sweep", parents=[common],
                          help="objective/step-count ablation over the tracks")
    sub.add_argument("--data", dest="dataset_root", help="dataset root")
    sub.add_argument("--out", dest="report_dir", help="report directory")
    sub.add_argument("--profile", choices=("full", "smoke"), default="full")
    sub.add_argument("--objectives", type=_csv_names,
                     help="comma list, e.g. eps,sample,v,rf")
    sub.add_argument("--steps", type=_csv_ints,
                     help="comma list of step counts, e.g. 1,2,4,8,20")
    sub.add_argument("--seeds", dest="sample_seeds", type=int,
                     help="sampling seeds per cell")
    sub.add_argument("--iterations", type=int)
    sub.add_argument("--batch-size", dest="batch_size", type=int)
    sub.add_argument("--lr", type=float)
    sub.add_argument("--resolution", type=int)
    sub.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except (UsageError, FileNotFoundError) as exc:
        _emit({"command": ns.command, "error": type(exc).__name__,
               "message": str(exc)}, stream=sys.stderr)
        return 2
    except Exception as exc:
        _emit({"command": ns.command, "error": type(exc).__name__,
               "message": str(exc)}, stream=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
