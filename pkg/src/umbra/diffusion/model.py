"""Conditional U-Net denoiser over shadow maps.

Inputs are channel-stacked (noisy shadow, object mask, object grayscale,
optionally the light blob map); light parameters enter through sinusoidal
scalar embeddings projected and summed with the timestep embedding, and the
merged vector biases every residual block.
"""

import json
import math
from dataclasses import asdict, dataclass

import torch

from .. import nn as unn
from ..scene import blob_map
from .conditioning import build_condition_batch, timestep_embed
from .schedule import OBJECTIVES

COND_MODES = ("scalar", "blob", "both")


@dataclass(frozen=True)
class DenoiserConfig:
    resolution: int = 64
    base_channels: int = 32
    channel_mult: tuple = (1, 2, 4)
    blocks_per_level: int = 2
    mid_blocks: int = 2
    cond_mode: str = "scalar"
    embed_dim: int = 256
    objective: str = "rf"
    include_intensity: bool = False
    groups: int = 8
    literal_freqs: bool = False

    def __post_init__(self):
        if self.cond_mode not in COND_MODES:
            raise ValueError(
                f"cond_mode must be one of {COND_MODES}, got {self.cond_mode!r}")
        if self.objective not in OBJECTIVES:
            raise ValueError(
                f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if not self.channel_mult:
            raise ValueError("channel_mult must be non-empty")
        down = 2 ** (len(self.channel_mult) - 1)
        if self.resolution % down != 0:
            raise ValueError(
                f"resolution {self.resolution} not divisible by the "
                f"downsampling factor {down}")
        if self.embed_dim < 2 or self.embed_dim % 2 != 0:
            raise ValueError(f"embed_dim must be even and >= 2, got {self.embed_dim}")
        if self.base_channels % self.groups != 0:
            raise ValueError(
                f"base_channels {self.base_channels} not divisible by "
                f"{self.groups} norm groups")
        object.__setattr__(self, "channel_mult", tuple(int(m) for m in self.channel_mult))

    @property
    def in_channels(self) -> int:
        return 3 + (1 if self.cond_mode in ("blob", "both") else 0)

    @property
    def has_scalar_cond(self) -> bool:
        return self.cond_mode in ("scalar", "both")

    @property
    def cond_width(self) -> int:
        if not self.has_scalar_cond:
            return 0
        return (4 if self.include_intensity else 3) * self.embed_dim

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        rec = json.loads(text)
        rec["channel_mult"] = tuple(rec["channel_mult"])
        return cls(**rec)


def _conv_init(gen, cout, cin, dtype):
    std = math.sqrt(2.0 / (cin * 9))
    return torch.randn(cout, cin, 3, 3, generator=gen, dtype=dtype) * std


def _linear_init(gen, dout, din, dtype):
    std = 1.0 / math.sqrt(din)
    return torch.randn(dout, din, generator=gen, dtype=dtype) * std


class ShadowDenoiser:
    """U-Net over (n, C, res, res) stacks; predicts one channel.

    Parameters live in a flat name -> tensor dict so the hand-rolled
    optimizer and the checkpoint format can address them directly.
    """

    def __init__(self, config: DenoiserConfig, seed: int = 0,
                 dtype=torch.float32):
        self.config = config
        self.dtype = dtype
        self.params = {}
        self._block_io = {}
        gen = torch.Generator().manual_seed(int(seed))
        c = config
        chans = [c.base_channels * m for m in c.channel_mult]
        d = c.embed_dim

        def conv(name, cout, cin, zero=False):
            w = (torch.zeros(cout, cin, 3, 3, dtype=dtype) if zero
                 else _conv_init(gen, cout, cin, dtype))
            self.params[f"{name}.w"] = w
            self.params[f"{name}.b"] = torch.zeros(cout, dtype=dtype)

        def lin(name, dout, din):
            self.params[f"{name}.w"] = _linear_init(gen, dout, din, dtype)
            self.params[f"{name}.b"] = torch.zeros(dout, dtype=dtype)

        def res(name, cin, cout):
            self._block_io[name] = (cin, cout)
            self.params[f"{name}.gn1.w"] = torch.ones(cin, dtype=dtype)
            self.params[f"{name}.gn1.b"] = torch.zeros(cin, dtype=dtype)
            conv(f"{name}.conv1", cout, cin)
            lin(f"{name}.emb", cout, d)
            self.params[f"{name}.gn2.w"] = torch.ones(cout, dtype=dtype)
            self.params[f"{name}.gn2.b"] = torch.zeros(cout, dtype=dtype)
            conv(f"{name}.conv2", cout, cout)
            if cin != cout:
                conv(f"{name}.skip", cout, cin)

        lin("time1", d, d)
        lin("time2", d, d)
        if c.has_scalar_cond:
            lin("cond", d, c.cond_width)
        conv("stem", chans[0], c.in_channels)
        for i, ch in enumerate(chans):
            if i > 0:
                conv(f"down{i}.ds", ch, chans[i - 1])
            for b in range(c.blocks_per_level):
                res(f"down{i}.block{b}", ch, ch)
        for b in range(c.mid_blocks):
            res(f"mid.block{b}", chans[-1], chans[-1])
        for i in reversed(range(len(chans))):
            ch = chans[i]
            if i < len(chans) - 1:
                conv(f"up{i}.us", ch, chans[i + 1])
            for b in range(c.blocks_per_level):
                res(f"up{i}.block{b}", ch * 2 if b == 0 else ch, ch)
        self.params["out_norm.w"] = torch.ones(chans[0], dtype=dtype)
        self.params["out_norm.b"] = torch.zeros(chans[0], dtype=dtype)
        conv("out", 1, chans[0], zero=True)
        for p in self.params.values():
            p.requires_grad_(True)

    # -- parameter plumbing ------------------------------------------------

    def names(self):
        return sorted(self.params)

    def parameters(self):
        return [self.params[k] for k in self.names()]

    def gradients(self):
        return [self.params[k].grad for k in self.names()]

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def load_state(self, named):
        missing = sorted(set(self.params) ^ set(named))
        if missing:
            raise ValueError(f"parameter name mismatch: {missing[:4]}")
        with torch.no_grad():
            for k, p in self.params.items():
                src = named[k]
                if tuple(src.shape) != tuple(p.shape):
                    raise ValueError(
                        f"shape mismatch for {k}: {tuple(src.shape)} vs "
                        f"{tuple(p.shape)}")
                p.copy_(src.to(self.dtype))

    # -- forward -----------------------------------------------------------

    def _res_block(self, name, h, emb):
        p = self.params
        cin, cout = self._block_io[name]
        x = unn.group_norm(h, self.config.groups, p[f"{name}.gn1.w"],
                           p[f"{name}.gn1.b"])
        x = unn.silu(x)
        x = unn.conv2d(x, p[f"{name}.conv1.w"], p[f"{name}.conv1.b"])
        x = unn.group_norm(x, self.config.groups, p[f"{name}.gn2.w"],
                           p[f"{name}.gn2.b"])
        # conditioning bias lands after the norm so it cannot be absorbed
        # into the subtracted group means
        bias = unn.linear(unn.silu(emb), p[f"{name}.emb.w"], p[f"{name}.emb.b"])
        x = unn.add(x, bias[:, :, None, None].expand_as(x))
        x = unn.silu(x)
        x = unn.conv2d(x, p[f"{name}.conv2.w"], p[f"{name}.conv2.b"])
        skip = h
        if cin != cout:
            skip = unn.conv2d(h, p[f"{name}.skip.w"], p[f"{name}.skip.b"])
        return unn.add(x, skip)

    def __call__(self, x_t, mask, obj, t, cond=None, blob=None):
        """Predict the objective target for a batch.

        x_t/mask/obj/blob: (n, 1, res, res); t: scalar or (n,); cond: the
        (n, cond_width) scalar-embedding block when the config has a scalar
        pathway (built by `embed_params`).
        """
        c, p = self.config, self.params
        n = x_t.shape[0]
        for label, img in (("x_t", x_t), ("mask", mask), ("obj", obj)):
            if tuple(img.shape) != (n, 1, c.resolution, c.resolution):
                raise ValueError(
                    f"{label} must be (n, 1, {c.resolution}, {c.resolution}), "
                    f"got {tuple(img.shape)}")
        parts = [x_t, mask, obj]
        if c.in_channels == 4:
            if blob is None:
                raise ValueError(f"cond_mode {c.cond_mode!r} needs a blob channel")
            parts.append(blob)
        t = torch.as_tensor(t, dtype=self.dtype)
        if t.dim() == 0:
            t = t.expand(n)
        emb = timestep_embed(t, c.embed_dim,
                             literal_freqs=c.literal_freqs).to(self.dtype)
        emb = unn.linear(emb, p["time1.w"], p["time1.b"])
        emb = unn.linear(unn.silu(emb), p["time2.w"], p["time2.b"])
        if c.has_scalar_cond:
            if cond is None:
                raise ValueError(f"cond_mode {c.cond_mode!r} needs a scalar block")
            if tuple(cond.shape) != (n, c.cond_width):
                raise ValueError(
                    f"cond must be (n, {c.cond_width}), got {tuple(cond.shape)}")
            emb = unn.add(emb, unn.linear(cond.to(self.dtype), p["cond.w"],
                                          p["cond.b"]))

        h = unn.conv2d(unn.concat_channels(parts), p["stem.w"], p["stem.b"])
        skips = []
        levels = len(c.channel_mult)
        for i in range(levels):
            if i > 0:
                h = unn.conv2d(h, p[f"down{i}.ds.w"], p[f"down{i}.ds.b"], stride=2)
            for b in range(c.blocks_per_level):
                h = self._res_block(f"down{i}.block{b}", h, emb)
            skips.append(h)
        for b in range(c.mid_blocks):
            h = self._res_block(f"mid.block{b}", h, emb)
        for i in reversed(range(levels)):
            if i < levels - 1:
                h = unn.conv2d(unn.upsample_nearest2x(h), p[f"up{i}.us.w"],
                               p[f"up{i}.us.b"])
            h = unn.concat_channels([h, skips.pop()])
            for b in range(c.blocks_per_level):
                h = self._res_block(f"up{i}.block{b}", h, emb)
        h = unn.silu(unn.group_norm(h, c.groups, p["out_norm.w"],
                                    p["out_norm.b"]))
        return unn.conv2d(h, p["out.w"], p["out.b"])

    # -- conditioning helpers ----------------------------------------------

    def embed_params(self, params):
        """(n, cond_width) scalar block for a list of LightParams, or None."""
        if not self.config.has_scalar_cond:
            return None
        return build_condition_batch(
            params, self.config.embed_dim,
            include_intensity=self.config.include_intensity,
            literal_freqs=self.config.literal_freqs,
        ).to(self.dtype)

    def blob_batch(self, params):
        """(n, 1, res, res) blob channel for a list of LightParams, or None."""
        if self.config.in_channels != 4:
            return None
        res = self.config.resolution
        maps = [torch.from_numpy(blob_map(p, (res, res))) for p in params]
        return torch.stack(maps).unsqueeze(1).to(self.dtype)
