"""Forward/backward operator basis for the toy denoiser.

Exactly the operators a small U-Net needs, each with strict shape checks
that name the operator in the error. No general broadcasting: add requires
equal shapes, scale takes a plain Python scalar.
"""

import numbers

import torch
import torch.nn.functional as F


def _fail(op, message):
    raise ValueError(f"{op}: {message}")


def conv2d(x, weight, bias=None, stride=1):
    """3x3 convolution, padding 1, stride 1 or 2."""
    if x.dim() != 4:
        _fail("conv2d", f"input must be (n, c, h, w), got {tuple(x.shape)}")
    if weight.dim() != 4 or tuple(weight.shape[2:]) != (3, 3):
        _fail("conv2d", f"weight must be (co, ci, 3, 3), got {tuple(weight.shape)}")
    if weight.shape[1] != x.shape[1]:
        _fail(
            "conv2d",
            f"input has {x.shape[1]} channels but weight expects {weight.shape[1]}",
        )
    if stride not in (1, 2):
        _fail("conv2d", f"stride must be 1 or 2, got {stride}")
    if bias is not None and tuple(bias.shape) != (weight.shape[0],):
        _fail("conv2d", f"bias must be ({weight.shape[0]},), got {tuple(bias.shape)}")
    return F.conv2d(x, weight, bias, stride=stride, padding=1)


def upsample_nearest2x(x):
    if x.dim() != 4:
        _fail("upsample_nearest2x", f"input must be (n, c, h, w), got {tuple(x.shape)}")
    return F.interpolate(x, scale_factor=2, mode="nearest")


def group_norm(x, groups, weight=None, bias=None, eps=1e-5):
    if x.dim() != 4:
        _fail("group_norm", f"input must be (n, c, h, w), got {tuple(x.shape)}")
    c = x.shape[1]
    if groups < 1 or c % groups != 0:
        _fail("group_norm", f"{c} channels not divisible into {groups} groups")
    for name, p in (("weight", weight), ("bias", bias)):
        if p is not None and tuple(p.shape) != (c,):
            _fail("group_norm", f"{name} must be ({c},), got {tuple(p.shape)}")
    return F.group_norm(x, groups, weight, bias, eps)


def silu(x):
    return F.silu(x)


def linear(x, weight, bias=None):
    if weight.dim() != 2:
        _fail("linear", f"weight must be (out, in), got {tuple(weight.shape)}")
    if x.shape[-1] != weight.shape[1]:
        _fail(
            "linear",
            f"input features {x.shape[-1]} do not match weight in-features "
            f"{weight.shape[1]}",
        )
    if bias is not None and tuple(bias.shape) != (weight.shape[0],):
        _fail("linear", f"bias must be ({weight.shape[0]},), got {tuple(bias.shape)}")
    return F.linear(x, weight, bias)


def add(a, b):
    if a.shape != b.shape:
        _fail("add", f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return a + b


def scale(x, s):
    if not isinstance(s, numbers.Real) or isinstance(s, bool):
        _fail("scale", f"factor must be a real scalar, got {type(s).__name__}")
    return x * float(s)


def concat_channels(parts):
    parts = list(parts)
    if not parts:
        _fail("concat_channels", "needs at least one input")
    for p in parts:
        if p.dim() != 4:
            _fail(
                "concat_channels",
                f"inputs must be (n, c, h, w), got {tuple(p.shape)}",
            )
        if p.shape[0] != parts[0].shape[0] or p.shape[2:] != parts[0].shape[2:]:
            _fail(
                "concat_channels",
                f"incompatible shapes {tuple(parts[0].shape)} vs {tuple(p.shape)}",
            )
    return torch.cat(parts, dim=1)


def backward(loss):
    """Reverse pass from a scalar loss; repeated calls accumulate gradients."""
    if loss.numel() != 1:
        raise ValueError(
            f"backward: loss must be a scalar, got shape {tuple(loss.shape)}"
        )
    loss.backward(retain_graph=False)
