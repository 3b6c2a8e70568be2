"""Scalar sinusoidal embeddings and the light-parameter condition vector."""

import math

import torch

from ..scene import LightParams


def sinusoidal_embed(value, d: int, literal_freqs: bool = False) -> torch.Tensor:
    """Embed a scalar (or a batch of scalars) into d dimensions.

    Layout is [cos(w_0 v) .. cos(w_{d/2-1} v), sin(w_0 v) .. sin(w_{d/2-1} v)].
    The default frequency ladder is the geometric one, w_i = 10000^(-i/(d/2-1)).
    literal_freqs switches to a quadratic-in-i exponent,
    w_i = 2^(-i(i-1)/((d/2)(d/2-1)) * log2(10000)), which shares both endpoints
    with the geometric ladder but spaces the interior differently; it exists
    for side-by-side comparison and is off by default.
    """
    if d < 2 or d % 2 != 0:
        raise ValueError(f"embedding width must be even and >= 2, got {d}")
    half = d // 2
    i = torch.arange(half, dtype=torch.float64)
    if half == 1:
        omega = torch.ones(1, dtype=torch.float64)
    elif literal_freqs:
        omega = torch.exp2(-(i * (i - 1.0)) / (half * (half - 1.0)) * math.log2(10000.0))
    else:
        omega = torch.pow(10000.0, -i / (half - 1.0))
    v = torch.as_tensor(value, dtype=torch.float64)
    ang = v.unsqueeze(-1) * omega
    return torch.cat([torch.cos(ang), torch.sin(ang)], dim=-1)


def timestep_embed(t, d: int, literal_freqs: bool = False) -> torch.Tensor:
    """Diffusion-time embedding; t in [0, 1] is scaled by 1000 so the
    fastest frequency resolves steps rather than the whole interval."""
    t = torch.as_tensor(t, dtype=torch.float64)
    return sinusoidal_embed(t * 1000.0, d, literal_freqs=literal_freqs)


def build_condition_vector(
    p: LightParams,
    d: int = 256,
    include_intensity: bool = False,
    literal_freqs: bool = False,
) -> torch.Tensor:
    """Concatenated per-scalar embeddings of the light parameters.

    Width is 3d for (theta, phi, size), or 4d when the intensity scalar is
    part of the conditioning. The network projects this block linearly and
    sums it with the timestep embedding inside its conditioning pathway.
    """
    scalars = [p.theta, p.phi, p.size]
    if include_intensity:
        scalars.append(p.intensity)
    parts = [sinusoidal_embed(s, d, literal_freqs=literal_freqs) for s in scalars]
    return torch.cat(parts, dim=-1)


def build_condition_batch(
    params,
    d: int = 256,
    include_intensity: bool = False,
    literal_freqs: bool = False,
) -> torch.Tensor:
    """Stack condition vectors for a list of LightParams into (n, 3d|4d)."""
    return torch.stack(
        [build_condition_vector(p, d, include_intensity, literal_freqs) for p in params]
    )
