"""Objective-by-step-count ablation over the benchmark tracks.

Trains one model per objective on a forged dataset, evaluates every
(objective, step count, sampling seed) cell on all three tracks, and checks
the light-control behaviour of the rectified-flow model (softness ordering,
azimuth reflection). Results land in a structured report with CSV exports.
"""

import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from ..forge import manifest_path, read_manifest
from ..metrics import (aggregate, boundary_gradient, evaluate_pair, soft_iou,
                       weighted_centroid)
from ..render import read_triplet
from ..scene import camera_project, default_camera
from .model import DenoiserConfig
from .sample import sample
from .schedule import OBJECTIVES
from .train import TrainConfig, load_training_set, make_run, train_step

# Large-scale one-step soft-IoU per track, kept for context in reports; the
# toy models are judged on trends, not on reaching these numbers.
REFERENCE_ONESTEP_IOU = {"track1": 0.768, "track2": 0.732, "track3": 0.736}

TRACK_TAGS = ("track1", "track2", "track3")


@dataclass(frozen=True)
class AblationProfile:
    name: str
    resolution: int
    base_channels: int
    blocks_per_level: int
    mid_blocks: int
    embed_dim: int
    batch_size: int
    iterations: int
    lr: float
    seeds: int
    steps: tuple = (1, 2, 4, 8, 20)
    objectives: tuple = OBJECTIVES
    cond_mode: str = "both"
    margin_degrade: float = 0.05
    margin_onestep: float = 0.05
    eval_batch: int = 16
    curve_points: int = 5
    curve_steps: int = 20
    control_steps: int = 20
    control_iterations: int = None
    train_seed: int = 0
    eval_seed: int = 1000
    train_intensity_variant: bool = False


def full_profile() -> AblationProfile:
    return AblationProfile(
        name="full", resolution=64, base_channels=32, blocks_per_level=2,
        mid_blocks=2, embed_dim=256, batch_size=16, iterations=5000,
        lr=3e-4, seeds=10,
    )


def smoke_profile() -> AblationProfile:
    """Reduced setting sized for minutes, with margins halved to match the
    extra noise of tiny models and few seeds.

    The equal-budget sweep stays at `iterations`; the control model behind
    the softness and azimuth checks trains longer (`control_iterations`),
    because those checks need a usable model, not a fair race.
    """
    return AblationProfile(
        name="smoke", resolution=32, base_channels=16, blocks_per_level=1,
        mid_blocks=2, embed_dim=128, batch_size=16, iterations=500,
        lr=1e-3, seeds=3, margin_degrade=0.025, margin_onestep=0.025,
        curve_points=4, curve_steps=8, control_steps=8,
        control_iterations=3000, train_intensity_variant=True,
    )


@dataclass
class AblationReport:
    profile: dict
    reference_large_scale: dict
    cells: object  # MetricReport
    curves: dict   # name -> [{"x", "mean", "std"}]
    trend: dict
    control: dict
    timings: dict = None  # phase -> seconds

    def to_json(self) -> str:
        doc = {
            "profile": self.profile,
            "reference_large_scale": self.reference_large_scale,
            "cells": json.loads(self.cells.to_json()),
            "curves": self.curves,
            "trend": self.trend,
            "control": self.control,
            "timings": self.timings or {},
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json() + "\n")
        (out / "cells.csv").write_text(self.cells.to_csv())
        for stem in ("curve_steps", "curve_iterations"):
            rows = ["objective,x,mean,std"]
            for name, points in sorted(self.curves.items()):
                kind, _, obj = name.partition("/")
                if kind != stem:
                    continue
                rows.extend(
                    f"{obj},{p['x']:.17g},{p['mean']:.17g},{p['std']:.17g}"
                    for p in points
                )
            (out / f"{stem}.csv").write_text("\n".join(rows) + "\n")
        return out


# ---------------------------------------------------------------------------
# track data

def _load_track(manifest, tag, dtype=torch.float32):
    from .train import object_channel

    entries = manifest.split(tag)
    if not entries:
        raise ValueError(f"manifest has no {tag} entries")
    masks, objs, shadows, params, meshes = [], [], [], [], []
    for e in entries:
        trip = read_triplet(manifest.root / e.split, e.id)
        masks.append(trip.mask.astype(np.float64))
        objs.append(object_channel(trip.preview, trip.mask))
        shadows.append(trip.shadow)
        params.append(e.light)
        meshes.append(e.mesh)
    to = lambda stack: torch.from_numpy(np.stack(stack)).unsqueeze(1).to(dtype)
    return {
        "masks": to(masks), "objs": to(objs), "shadows": shadows,
        "params": params, "meshes": meshes, "count": len(entries),
    }


def _predict(model, track, steps, noise, eval_batch):
    """Sampled shadow maps for every track entry, as (m, res, res) float64."""
    outs = []
    for lo in range(0, track["count"], eval_batch):
        sl = slice(lo, lo + eval_batch)
        outs.append(sample(model, track["masks"][sl], track["objs"][sl],
                           track["params"][sl], steps, x_init=noise[sl]))
    return torch.cat(outs).squeeze(1).to(torch.float64).numpy()


def _track_noise(track, seed, dtype):
    gen = torch.Generator().manual_seed(int(seed))
    shape = (track["count"], 1) + tuple(track["masks"].shape[-2:])
    return torch.randn(shape, generator=gen, dtype=dtype)


def _mean_track_iou(model, track, steps, seed, eval_batch):
    noise = _track_noise(track, seed, model.dtype)
    pred = _predict(model, track, steps, noise, eval_batch)
    vals = [soft_iou(pred[j], track["shadows"][j]) for j in range(track["count"])]
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# control checks (rectified-flow model)

def softness_check(model, track, steps, seed, eval_batch):
    """Boundary-gradient ordering across light sizes on track 1."""
    noise = _track_noise(track, seed, model.dtype)
    pred = _predict(model, track, steps, noise, eval_batch)
    grads = [boundary_gradient(pred[j]) for j in range(track["count"])]
    by_size = {}
    by_mesh = {}
    for j, p in enumerate(track["params"]):
        by_size.setdefault(p.size, []).append(grads[j])
        by_mesh.setdefault(track["meshes"][j], {})[p.size] = grads[j]
    sizes = sorted(by_size)
    means = [float(np.mean(by_size[s])) for s in sizes]
    decreasing = all(a > b for a, b in zip(means, means[1:]))
    mesh_flags = []
    for mesh, table in sorted(by_mesh.items()):
        seq = [table[s] for s in sorted(table)]
        mesh_flags.append(all(a > b for a, b in zip(seq, seq[1:])))
    return {
        "sizes": [float(s) for s in sizes],
        "mean_gradient": means,
        "mean_decreasing": bool(decreasing),
        "mesh_fraction": float(np.mean(mesh_flags)) if mesh_flags else 0.0,
    }


def ground_mirror_warp(camera):
    """Pixel warp that point-reflects the ground plane through the origin.

    For each pixel, unproject to the ground (z = 0), mirror the ground point
    through the world origin (the object's ground anchor), and project back
    with the same camera. Returns bilinear gather indices plus a validity
    mask (pixels whose source lies off-plane, behind the camera, or outside
    the frame).
    """
    w, h = camera.image_size
    pos, right, up, fwd = camera.basis()
    tha = camera.tan_half_fov * camera.aspect
    thv = camera.tan_half_fov
    rows, cols = np.mgrid[0:h, 0:w]
    sy = 1.0 - (rows + 0.5) / h * 2.0
    sx = (cols + 0.5) / w * 2.0 - 1.0
    d = (fwd[None, None, :] + (sx * tha)[..., None] * right[None, None, :]
         + (sy * thv)[..., None] * up[None, None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        tt = -pos[2] / d[..., 2]
    valid = np.isfinite(tt) & (tt > 0.0)
    gx = pos[0] + tt * d[..., 0]
    gy = pos[1] + tt * d[..., 1]
    v = np.stack([-gx - pos[0], -gy - pos[1], np.full_like(gx, -pos[2])],
                 axis=-1)
    depth = v @ fwd
    valid &= depth > 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        col = ((v @ right) / depth / tha + 1.0) / 2.0 * w - 0.5
        row = (1.0 - (v @ up) / depth / thv) / 2.0 * h - 0.5
    valid &= (col >= 0.0) & (col <= w - 1.0) & (row >= 0.0) & (row <= h - 1.0)
    col = np.clip(np.nan_to_num(col), 0.0, w - 1.0)
    row = np.clip(np.nan_to_num(row), 0.0, h - 1.0)
    c0 = np.floor(col).astype(np.int64)
    r0 = np.floor(row).astype(np.int64)
    c1 = np.minimum(c0 + 1, w - 1)
    r1 = np.minimum(r0 + 1, h - 1)
    return {
        "valid": valid, "r0": r0, "c0": c0, "r1": r1, "c1": c1,
        "fr": row - r0, "fc": col - c0,
    }


def mirror_ground_field(shadow, mask, warp):
    """Shadow map reflected through the ground anchor, re-occluded.

    The mask (object silhouette) is applied to both the sample source and
    the output, so the mirrored field loses exactly the regions the camera
    cannot see, like a real render from the opposite azimuth would.
    """
    s = np.asarray(shadow, dtype=np.float64) * (1.0 - mask)
    fr, fc = warp["fr"], warp["fc"]
    gathered = ((1 - fr) * (1 - fc) * s[warp["r0"], warp["c0"]]
                + (1 - fr) * fc * s[warp["r0"], warp["c1"]]
                + fr * (1 - fc) * s[warp["r1"], warp["c0"]]
                + fr * fc * s[warp["r1"], warp["c1"]])
    return gathered * warp["valid"] * (1.0 - mask)


def shadow_core(field, level=0.25):
    """Occlusion restricted to its core: values below `level` times the
    peak are zeroed.

    Centroids of raw model output are dominated by the faint halo a blurry
    model spreads over the whole ground; the core carries the direction.
    Ground truth is unaffected (its halo is the penumbra, already near the
    core).
    """
    field = np.asarray(field, dtype=np.float64)
    peak = field.max()
    if peak <= 0.0:
        return np.zeros_like(field)
    return field * (field >= level * peak)


def phi_reflection_check(model, track, steps, seed, eval_batch,
                         max_offset_frac=0.10):
    """Azimuth+180 should mirror the shadow field through the object's
    ground anchor on track 2.

    Direct centroid reflection in pixel space fails even on ground truth:
    the object hides most of the away-facing shadow, and perspective
    shrinks it. Instead the phi-prediction is mirrored on the ground plane
    (warp + re-occlusion), and the centroid of its shadow core must match
    the core centroid of the (phi+180)-prediction within
    `max_offset_frac` of the image width.
    """
    noise = _track_noise(track, seed, model.dtype)
    pred = _predict(model, track, steps, noise, eval_batch)
    res = pred.shape[-1]
    camera = default_camera((res, res))
    warp = ground_mirror_warp(camera)
    anchor = camera_project(camera, (0.0, 0.0, 0.0))
    index = {}
    for j, p in enumerate(track["params"]):
        index[(track["meshes"][j], round(p.phi) % 360)] = j
    hits, pairs, dists = 0, 0, []
    for (mesh, phi), j in sorted(index.items()):
        if phi >= 180:
            continue
        k = index.get((mesh, phi + 180))
        if k is None:
            continue
        pairs += 1
        mask = np.asarray(track["masks"][j, 0].to(torch.float64))
        c_a = weighted_centroid(
            shadow_core(mirror_ground_field(pred[j], mask, warp)))
        c_b = weighted_centroid(shadow_core(pred[k] * (1.0 - mask)))
        if c_a is None or c_b is None:
            dists.append(float("inf"))
            continue
        dist = math.hypot(c_a[0] - c_b[0], c_a[1] - c_b[1])
        dists.append(dist)
        if dist <= max_offset_frac * res:
            hits += 1
    return {
        "pairs": pairs,
        "hits": hits,
        "fraction": hits / pairs if pairs else 0.0,
        "max_offset_frac": max_offset_frac,
        "anchor": list(anchor),
        "distances": dists,
    }


# ---------------------------------------------------------------------------
# the ablation

def _train_with_curve(data, config, profile, curve_track, log=None):
    tc = TrainConfig(lr=profile.lr, batch_size=profile.batch_size,
                     iterations=profile.iterations)
    state = make_run(config, tc, seed=profile.train_seed)
    snaps = sorted({
        max(1, round(profile.iterations * (i + 1) / profile.curve_points))
        for i in range(profile.curve_points)
    })
    curve = []
    for snap in snaps:
        while state.step < snap:
            train_step(state, data)
        iou = _mean_track_iou(state.model, curve_track, profile.curve_steps,
                              profile.eval_seed, profile.eval_batch)
        curve.append({"x": float(snap), "mean": iou, "std": 0.0})
        if log:
            log(f"{config.objective}: step {snap} curve iou {iou:.4f}")
    return state, curve


def run_ablation(dataset_root, out_dir=None, profile: AblationProfile = None,
                 log=None):
    """Train, evaluate, and report. Returns (AblationReport, models) where
    models maps objective -> TrainRunState (plus "rf_intensity" when the
    profile trains the 4-scalar variant)."""
    profile = profile or smoke_profile()
    if 1 not in profile.steps:
        raise ValueError("profile.steps must include 1 (the one-step cell)")
    root = Path(dataset_root)
    train_path = manifest_path(root, "train.manifest.jsonl")
    tracks_path = manifest_path(root, "tracks.manifest.jsonl")
    for p, label in ((train_path, "training"), (tracks_path, "tracks")):
        if not p.exists():
            raise FileNotFoundError(
                f"{label} manifest not found: {p} (forge the dataset first)")
    data = load_training_set(read_manifest(train_path))
    if data.resolution != profile.resolution:
        raise ValueError(
            f"dataset resolution {data.resolution} does not match profile "
            f"resolution {profile.resolution}")
    tracks_manifest = read_manifest(tracks_path)
    tracks = {tag: _load_track(tracks_manifest, tag) for tag in TRACK_TAGS}

    def cfg(objective, include_intensity=False):
        return DenoiserConfig(
            resolution=profile.resolution, base_channels=profile.base_channels,
            blocks_per_level=profile.blocks_per_level,
            mid_blocks=profile.mid_blocks, embed_dim=profile.embed_dim,
            objective=objective, cond_mode=profile.cond_mode,
            include_intensity=include_intensity,
        )

    def train_plain(config, iterations):
        tc = TrainConfig(lr=profile.lr, batch_size=profile.batch_size,
                         iterations=iterations)
        st = make_run(config, tc, seed=profile.train_seed)
        while st.step < iterations:
            train_step(st, data)
        return st

    t_start = time.monotonic()
    models, curves = {}, {}
    for objective in profile.objectives:
        state, curve = _train_with_curve(data, cfg(objective), profile,
                                         tracks["track1"], log=log)
        models[objective] = state
        curves[f"curve_iterations/{objective}"] = curve

    samples = []
    pooled = {obj: {k: [] for k in profile.steps} for obj in profile.objectives}
    for objective in profile.objectives:
        model = models[objective].model
        for i in range(profile.seeds):
            seed = profile.eval_seed + i
            per_k = {k: [] for k in profile.steps}
            for tag in TRACK_TAGS:
                track = tracks[tag]
                noise = _track_noise(track, seed, model.dtype)
                for k in profile.steps:
                    pred = _predict(model, track, k, noise, profile.eval_batch)
                    for j in range(track["count"]):
                        met = evaluate_pair(pred[j], track["shadows"][j])
                        samples.append((f"{objective}/{tag}/steps{k}", seed, met))
                        per_k[k].append(met["iou"])
            for k in profile.steps:
                pooled[objective][k].append(float(np.mean(per_k[k])))
        if log:
            log(f"{objective}: evaluated {profile.seeds} seeds")
    cells = aggregate(samples)
    for objective in profile.objectives:
        curves[f"curve_steps/{objective}"] = [
            {"x": float(k), "mean": float(np.mean(pooled[objective][k])),
             "std": float(np.std(pooled[objective][k]))}
            for k in profile.steps
        ]

    def track_mean_iou(objective, k):
        vals = [cells.get(f"{objective}/{tag}/steps{k}", "iou").mean
                for tag in TRACK_TAGS]
        return float(np.mean(vals))

    k_hi = max(profile.steps)
    onestep = {obj: track_mean_iou(obj, 1) for obj in profile.objectives}
    others = [onestep[o] for o in profile.objectives if o != "rf"]
    trend = {
        "onestep_iou": onestep,
        "rf_iou_at_max_steps": track_mean_iou("rf", k_hi),
        "max_steps": k_hi,
        "margin_degrade": profile.margin_degrade,
        "margin_onestep": profile.margin_onestep,
    }
    trend["rf_onestep_holds_up"] = bool(
        onestep.get("rf", 0.0)
        >= trend["rf_iou_at_max_steps"] - profile.margin_degrade)
    trend["rf_onestep_beats_others"] = bool(
        others and onestep.get("rf", 0.0) >= max(others) + profile.margin_onestep)
    trend_s = time.monotonic() - t_start

    control = {}
    if "rf" in models:
        control_iters = profile.control_iterations or profile.iterations
        if profile.control_iterations and profile.control_iterations > profile.iterations:
            models["rf_control"] = train_plain(cfg("rf"), control_iters)
            if log:
                log(f"rf_control: trained {control_iters} iterations")
        rf = models.get("rf_control", models["rf"]).model
        control["model"] = "rf_control" if "rf_control" in models else "rf"
        control["iterations"] = control_iters
        control["softness"] = softness_check(
            rf, tracks["track1"], profile.control_steps, profile.eval_seed,
            profile.eval_batch)
        control["phi_reflection"] = phi_reflection_check(
            rf, tracks["track2"], profile.control_steps, profile.eval_seed,
            profile.eval_batch)
    if profile.train_intensity_variant:
        iters = profile.control_iterations or profile.iterations
        models["rf_intensity"] = train_plain(
            cfg("rf", include_intensity=True), iters)
        if log:
            log(f"rf_intensity: trained {iters} iterations")

    report = AblationReport(
        profile=asdict(profile),
        reference_large_scale=dict(REFERENCE_ONESTEP_IOU),
        cells=cells, curves=curves, trend=trend, control=control,
        timings={
            "sweep_s": round(trend_s, 3),
            "total_s": round(time.monotonic() - t_start, 3),
        },
    )
    if out_dir is not None:
        report.write(out_dir)
    return report, models
