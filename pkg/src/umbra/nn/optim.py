"""AdamW with decoupled weight decay, written out longhand.

The decay is applied to the parameter before the moment update
(p <- p * (1 - lr*wd)), then the bias-corrected Adam step follows. State is
a plain dict so it can sit in checkpoints next to the parameters.
"""

import torch


def adamw_init(params):
    """Fresh optimizer state for a parameter list."""
    return {
        "step": 0,
        "m": [torch.zeros_like(p) for p in params],
        "v": [torch.zeros_like(p) for p in params],
    }


@torch.no_grad()
def adamw_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8,
               weight_decay=0.0):
    """One in-place update; returns the mutated state.

    Missing gradients (None) skip the moment update but still decay the
    parameter, matching decoupled-decay semantics.
    """
    if len(params) != len(grads):
        raise ValueError(
            f"adamw_step: {len(params)} params but {len(grads)} grads"
        )
    state["step"] += 1
    t = state["step"]
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if weight_decay != 0.0:
            p.mul_(1.0 - lr * weight_decay)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(
                f"adamw_step: grad shape {tuple(g.shape)} != param shape "
                f"{tuple(p.shape)}"
            )
        m = state["m"][i]
        v = state["v"][i]
        m.mul_(beta1).add_(g, alpha=1.0 - beta1)
        v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
        m_hat = m / bc1
        v_hat = v / bc2
        p.addcdiv_(m_hat, v_hat.sqrt().add_(eps), value=-lr)
    return state
