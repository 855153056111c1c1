"""Finite-difference gradient verification.

Checks every parameter and input gradient of a module against central
differences computed in 64-bit arithmetic, independent of the backward
pass under test.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_tensor: str

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol


def grad_check(module: torch.nn.Module, inputs: tuple[torch.Tensor, ...],
               step: float = 1e-4, loss_fn=None) -> GradCheckReport:
    """Compare analytic gradients of a scalar loss against central differences."""
    module = module.double()
    inputs = tuple(x.double().clone().requires_grad_(True) for x in inputs)
    if loss_fn is None:
        loss_fn = lambda out: (out if isinstance(out, torch.Tensor) else out[0]).pow(2).sum()

    def forward_loss():
        return loss_fn(module(*inputs))

    loss = forward_loss()
    module.zero_grad()
    loss.backward()

    named = list(module.named_parameters()) + [
        (f"input{i}", x) for i, x in enumerate(inputs)
    ]
    worst, worst_name = 0.0, ""
    for name, tensor in named:
        analytic = tensor.grad
        if analytic is None:
            continue
        flat = tensor.data.view(-1)
        numeric = torch.zeros_like(flat)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + step
            hi = forward_loss().item()
            flat[i] = orig - step
            lo = forward_loss().item()
            flat[i] = orig
            numeric[i] = (hi - lo) / (2 * step)
        numeric = numeric.view_as(tensor)
        denom = max(analytic.abs().max().item(), numeric.abs().max().item(), 1e-8)
        rel = (analytic - numeric).abs().max().item() / denom
        if rel > worst:
            worst, worst_name = rel, name
    return GradCheckReport(max_rel_error=worst, worst_tensor=worst_name)
