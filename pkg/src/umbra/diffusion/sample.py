"""Deterministic samplers for every training objective.

Rectified flow integrates the learned velocity with explicit Euler from
t = 1 to t = 0. The eps/sample/v objectives share one loop: each step
re-derives (x0_hat, eps_hat) from the prediction through the schedule
identities and re-projects onto the next point of the time grid. That grid
starts at T_MAX rather than 1.0 because alpha(1) vanishes and the eps
identity divides by it.
"""

import math

import torch

from .schedule import OBJECTIVES

T_MAX = 0.999
ALPHA_FLOOR = 1e-6


def sample_state(model, mask, obj, params, steps, seed=0, x_init=None,
                 objective=None, t_max=T_MAX):
    """Integrate in the [-1, 1] diffusion state space; no clamping.

    `model` is callable as model(x, mask, obj, t, cond=..., blob=...) and
    carries a `config`; `params` is a list of LightParams, one per batch row.
    `x_init` overrides the seeded Gaussian start (oracle hooks, batched
    evaluation with pre-drawn noise).
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    objective = objective or model.config.objective
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    n = mask.shape[0]
    res = model.config.resolution
    cond = model.embed_params(params)
    blob = model.blob_batch(params)
    if x_init is not None:
        x = x_init.clone()
    else:
        gen = torch.Generator().manual_seed(int(seed))
        x = torch.randn((n, 1, res, res), generator=gen, dtype=mask.dtype)

    with torch.no_grad():
        if objective == "rf":
            ts = torch.linspace(1.0, 0.0, steps + 1, dtype=torch.float64)
            for k in range(steps):
                t = float(ts[k])
                dt = float(ts[k] - ts[k + 1])
                f = model(x, mask, obj, t, cond=cond, blob=blob)
                x = x - dt * f
            return x

        grid = [t_max * (1.0 - k / steps) for k in range(steps + 1)]
        for k in range(steps):
            t, t_next = grid[k], grid[k + 1]
            a = max(math.cos(math.pi * t / 2.0), ALPHA_FLOOR)
            s = max(math.sin(math.pi * t / 2.0), ALPHA_FLOOR)
            a_next = math.cos(math.pi * t_next / 2.0)
            s_next = math.sin(math.pi * t_next / 2.0)
            out = model(x, mask, obj, t, cond=cond, blob=blob)
            if objective == "eps":
                eps_hat = out
                x0_hat = (x - s * eps_hat) / a
            elif objective == "sample":
                x0_hat = out
                eps_hat = (x - a * x0_hat) / s
            else:  # v
                x0_hat = a * x - s * out
                eps_hat = s * x + a * out
            x = a_next * x0_hat + s_next * eps_hat
    return x


def sample(model, mask, obj, params, steps, seed=0, x_init=None,
           objective=None, t_max=T_MAX):
    """Sample shadow maps in [0, 1]: state-space result mapped and clamped."""
    x = sample_state(model, mask, obj, params, steps, seed=seed, x_init=x_init,
                     objective=objective, t_max=t_max)
    return torch.clamp((x + 1.0) / 2.0, 0.0, 1.0)
