"""Minimal differentiable operator set, optimizer, and checkpoint format.

Autograd is delegated to torch's reverse-mode engine; this package pins the
operator surface (with strict shape validation), the AdamW update rule, and
the on-disk parameter format.
"""

from umbra.nn.ops import (
    add,
    backward,
    concat_channels,
    conv2d,
    group_norm,
    linear,
    scale,
    silu,
    upsample_nearest2x,
)
from umbra.nn.optim import adamw_init, adamw_step
from umbra.nn.checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "add", "backward", "concat_channels", "conv2d", "group_norm", "linear",
    "scale", "silu", "upsample_nearest2x",
    "adamw_init", "adamw_step",
    "save_checkpoint", "load_checkpoint",
]
