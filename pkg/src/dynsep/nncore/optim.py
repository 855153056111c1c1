"""Functional Adam step and global gradient-norm clipping.

Trainers use these against lists of parameter tensors; the semantics
match the stock Adam recipe (beta1=0.9, beta2=0.999, eps=1e-8).
"""

from __future__ import annotations

import math

import torch


class NumericError(RuntimeError):
    """Non-finite gradients or loss surfaced to the trainer."""


def adam_state(params: list[torch.Tensor]) -> dict:
    return {
        "step": 0,
        "m": [torch.zeros_like(p) for p in params],
        "v": [torch.zeros_like(p) for p in params],
    }


@torch.no_grad()
def adam_step(params: list[torch.Tensor], grads: list[torch.Tensor], lr: float,
              state: dict, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One Adam update in place; raises NumericError on non-finite gradients."""
    for g in grads:
        if not torch.isfinite(g).all():
            raise NumericError("non-finite gradient")
    state["step"] += 1
    t = state["step"]
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        m.mul_(beta1).add_(g, alpha=1.0 - beta1)
        v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
        p.addcdiv_(m / bc1, (v / bc2).sqrt().add_(eps), value=-lr)


@torch.no_grad()
def clip_grad_norm(grads: list[torch.Tensor], max_norm: float) -> float:
    """Rescale all gradients in place if their global L2 norm exceeds max_norm."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    total = math.sqrt(sum(float(g.pow(2).sum()) for g in grads))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for g in grads:
            g.mul_(scale)
    return total
