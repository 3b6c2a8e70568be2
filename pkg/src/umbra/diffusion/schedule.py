"""Noise schedules, forward corruption, and training targets.

The default schedule is variance-preserving with alpha(t) = cos(pi t / 2),
sigma(t) = sin(pi t / 2) on t in [0, 1]. Rectified flow uses the straight
interpolation path instead and its target is the constant field x1 - x0.
"""

import math
from dataclasses import dataclass

import torch

OBJECTIVES = ("eps", "sample", "v", "rf")


@dataclass(frozen=True)
class Schedule:
    alpha: callable
    sigma: callable


def vp_cosine() -> Schedule:
    return Schedule(
        alpha=lambda t: torch.cos(torch.as_tensor(t, dtype=torch.float64) * (math.pi / 2)),
        sigma=lambda t: torch.sin(torch.as_tensor(t, dtype=torch.float64) * (math.pi / 2)),
    )


def _coef(fn, t, like):
    """Schedule coefficient broadcast over batch: t scalar or (n,)."""
    c = fn(t).to(like.dtype)
    if c.dim() == 0:
        return c
    return c.view(-1, *([1] * (like.dim() - 1)))


def forward_diffuse(x0, eps, t, schedule: Schedule):
    """x_t = alpha(t) x0 + sigma(t) eps."""
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: {tuple(x0.shape)} vs {tuple(eps.shape)}")
    return _coef(schedule.alpha, t, x0) * x0 + _coef(schedule.sigma, t, x0) * eps


def rf_interpolate(x0, x1, t):
    """Straight path x_t = t x1 + (1 - t) x0."""
    if x0.shape != x1.shape:
        raise ValueError(f"shape mismatch: {tuple(x0.shape)} vs {tuple(x1.shape)}")
    t = torch.as_tensor(t, dtype=x0.dtype)
    if t.dim() > 0:
        t = t.view(-1, *([1] * (x0.dim() - 1)))
    return t * x1 + (1.0 - t) * x0


def loss_target(objective, x0, eps, t, schedule: Schedule):
    """Regression target per training objective.

    eps -> the injected noise; sample -> the clean signal; v -> the
    schedule-weighted combination alpha*eps - sigma*x0; rf -> the constant
    direction x1 - x0 with the noise endpoint as x1.
    """
    if objective == "eps":
        return eps
    if objective == "sample":
        return x0
    if objective == "v":
        a = _coef(schedule.alpha, t, x0)
        s = _coef(schedule.sigma, t, x0)
        return a * eps - s * x0
    if objective == "rf":
        return eps - x0
    raise ValueError(f"unknown objective {objective!r}; expected one of {OBJECTIVES}")
