"""Training loop for the shadow denoiser.

Shadow maps are remapped to [-1, 1] for the diffusion state space; the
sampler maps predictions back. Checkpoints carry model weights, optimizer
moments, and the torch RNG state so a resumed run continues bit-identically.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .. import nn as unn
from ..forge import read_manifest
from ..render import read_triplet
from .model import DenoiserConfig, ShadowDenoiser
from .schedule import forward_diffuse, loss_target, rf_interpolate, vp_cosine

LUMA = (0.2126, 0.7152, 0.0722)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 16
    iterations: int = 5000
    weight_decay: float = 0.0
    intensity_range: tuple = (0.1, 1.9)


@dataclass
class TrainingSet:
    shadows: torch.Tensor  # (n, 1, res, res) in [0, 1]
    masks: torch.Tensor
    objs: torch.Tensor     # object-cutout luminance in [0, 1]
    params: list

    @property
    def count(self):
        return self.shadows.shape[0]

    @property
    def resolution(self):
        return self.shadows.shape[-1]


def luminance(preview):
    """Rec. 709 luma of an (h, w, 3) preview in [0, 1]."""
    p = np.asarray(preview, dtype=np.float64)
    return p[..., 0] * LUMA[0] + p[..., 1] * LUMA[1] + p[..., 2] * LUMA[2]


def object_channel(preview, mask):
    """Conditioning luminance restricted to the object cutout.

    The preview darkens the ground by the rendered shadow, so feeding its
    full luminance to the denoiser would hand it the answer; masking keeps
    only the (shadow-free) object pixels.
    """
    return luminance(preview) * np.asarray(mask, dtype=np.float64)


def load_training_set(manifest, dtype=torch.float32, limit=None) -> TrainingSet:
    """Load triplets referenced by a manifest (object or path) into tensors."""
    if not hasattr(manifest, "entries"):
        manifest = read_manifest(manifest)
    entries = manifest.entries if limit is None else manifest.entries[:limit]
    if not entries:
        raise ValueError(f"manifest at {manifest.root} has no entries")
    shadows, masks, objs, params = [], [], [], []
    for e in entries:
        trip = read_triplet(manifest.root / e.split, e.id)
        if trip.shadow.shape[0] != trip.shadow.shape[1]:
            raise ValueError(f"entry {e.id}: non-square images unsupported")
        shadows.append(trip.shadow)
        masks.append(trip.mask.astype(np.float64))
        objs.append(object_channel(trip.preview, trip.mask))
        params.append(e.light)
    to = lambda stack: torch.from_numpy(np.stack(stack)).unsqueeze(1).to(dtype)
    return TrainingSet(shadows=to(shadows), masks=to(masks), objs=to(objs),
                       params=params)


@dataclass
class TrainRunState:
    model: ShadowDenoiser
    opt_state: dict
    gen: torch.Generator
    train: TrainConfig
    seed: int
    step: int = 0
    loss_history: list = field(default_factory=list)


def make_run(config: DenoiserConfig, train: TrainConfig = None,
             seed: int = 0, dtype=torch.float32) -> TrainRunState:
    model = ShadowDenoiser(config, seed=seed, dtype=dtype)
    gen = torch.Generator().manual_seed(int(seed) + 1)
    return TrainRunState(model=model, opt_state=unn.adamw_init(model.parameters()),
                         gen=gen, train=train or TrainConfig(), seed=int(seed))


def train_step(state: TrainRunState, data: TrainingSet) -> float:
    """One optimization step on a random batch; returns the loss."""
    model, tc, gen = state.model, state.train, state.gen
    c = model.config
    if data.resolution != c.resolution:
        raise ValueError(
            f"dataset resolution {data.resolution} does not match model "
            f"resolution {c.resolution}")
    idx = torch.randint(data.count, (tc.batch_size,), generator=gen)
    x0 = data.shadows[idx]
    mask = data.masks[idx]
    obj = data.objs[idx]
    params = [data.params[i] for i in idx.tolist()]
    if c.include_intensity:
        lo, hi = tc.intensity_range
        gain = torch.rand(tc.batch_size, generator=gen, dtype=torch.float64)
        gain = (lo + (hi - lo) * gain).tolist()
        gain_col = torch.tensor(gain).to(x0.dtype).view(-1, 1, 1, 1)
        x0 = torch.clamp(gain_col * x0, max=1.0)
        params = [replace(p, intensity=g) for p, g in zip(params, gain)]

    x0 = x0 * 2.0 - 1.0
    t = torch.rand(tc.batch_size, generator=gen, dtype=torch.float64)
    eps = torch.randn(x0.shape, generator=gen, dtype=x0.dtype)
    sch = vp_cosine()
    if c.objective == "rf":
        x_t = rf_interpolate(x0, eps, t)
    else:
        x_t = forward_diffuse(x0, eps, t, sch)
    target = loss_target(c.objective, x0, eps, t, sch)

    model.zero_grad()
    pred = model(x_t, mask, obj, t, cond=model.embed_params(params),
                 blob=model.blob_batch(params))
    loss = ((pred - target) ** 2).mean()
    value = float(loss.detach())
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite loss {value} at step {state.step}")
    unn.backward(loss)
    unn.adamw_step(model.parameters(), model.gradients(), state.opt_state,
                   lr=tc.lr, weight_decay=tc.weight_decay)
    state.step += 1
    state.loss_history.append(value)
    return value


def train_run(data: TrainingSet, config: DenoiserConfig = None,
              train: TrainConfig = None, seed: int = 0,
              state: TrainRunState = None, log=None) -> TrainRunState:
    """Train until `train.iterations`, fresh or continuing from `state`."""
    if state is None:
        state = make_run(config or DenoiserConfig(resolution=data.resolution),
                         train, seed)
    while state.step < state.train.iterations:
        value = train_step(state, data)
        if log is not None:
            log(state.step, value)
    return state


# ---------------------------------------------------------------------------
# checkpointing

def save_run(state: TrainRunState, path):
    named = dict(state.model.params)
    for key, p in zip(state.model.names(), state.opt_state["m"]):
        named[f"opt.m.{key}"] = p
    for key, p in zip(state.model.names(), state.opt_state["v"]):
        named[f"opt.v.{key}"] = p
    extra = {
        "config": json.loads(state.model.config.to_json()),
        "train": {
            "lr": state.train.lr,
            "batch_size": state.train.batch_size,
            "iterations": state.train.iterations,
            "weight_decay": state.train.weight_decay,
            "intensity_range": list(state.train.intensity_range),
        },
        "seed": state.seed,
        "step": state.step,
        "opt_step": state.opt_state["step"],
        "loss_history": state.loss_history,
        "rng": state.gen.get_state().tolist(),
    }
    return unn.save_checkpoint(path, named, extra=extra)


def load_run(path, dtype=torch.float32) -> TrainRunState:
    named, extra = unn.load_checkpoint(path, dtype=dtype)
    rec = dict(extra["config"])
    rec["channel_mult"] = tuple(rec["channel_mult"])
    config = DenoiserConfig(**rec)
    tr = dict(extra["train"])
    tr["intensity_range"] = tuple(tr["intensity_range"])
    train = TrainConfig(**tr)
    model = ShadowDenoiser(config, seed=extra["seed"], dtype=dtype)
    model.load_state({k: v for k, v in named.items() if not k.startswith("opt.")})
    opt_state = {
        "step": extra["opt_step"],
        "m": [named[f"opt.m.{k}"].clone() for k in model.names()],
        "v": [named[f"opt.v.{k}"].clone() for k in model.names()],
    }
    gen = torch.Generator()
    gen.set_state(torch.tensor(extra["rng"], dtype=torch.uint8))
    return TrainRunState(model=model, opt_state=opt_state, gen=gen, train=train,
                         seed=extra["seed"], step=extra["step"],
                         loss_history=list(extra["loss_history"]))
