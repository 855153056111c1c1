"""PPO with generalized advantage estimation over fixed 20-step rollouts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .. import nncore
from .policy import PolicyNet


@dataclass
class PPOConfig:
    lr: float = 1e-4
    clip_eps: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    epochs: int = 4
    grad_clip: float = 0.5
    gamma: float = 0.99
    gae_lambda: float = 0.95


@dataclass
class RolloutBuffer:
    """One batch of complete 20-step episodes (time-major tensors)."""

    visual: list = field(default_factory=list)
    binaural: list = field(default_factory=list)
    monaural: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)

    episodes: int = 0

    def add_episode(self, steps: list[dict]) -> None:
        """steps: per-step dicts with obs tensors, action, log_prob, value, reward."""
        self.visual.append(torch.stack([s["visual"] for s in steps]))
        self.binaural.append(torch.stack([s["binaural"] for s in steps]))
        self.monaural.append(torch.stack([s["monaural"] for s in steps]))
        self.actions.append(torch.tensor([s["action"] for s in steps]))
        self.log_probs.append(torch.tensor([s["log_prob"] for s in steps]))
        self.values.append(torch.tensor([s["value"] for s in steps]))
        self.rewards.append(torch.tensor([s["reward"] for s in steps]))
        self.episodes += 1

    def stacked(self):
        """Returns time-major (T, B, ...) tensors."""
        return (torch.stack(self.visual, 1), torch.stack(self.binaural, 1),
                torch.stack(self.monaural, 1), torch.stack(self.actions, 1),
                torch.stack(self.log_probs, 1), torch.stack(self.values, 1),
                torch.stack(self.rewards, 1))


def compute_gae(rewards: torch.Tensor, values: torch.Tensor, gamma: float,
                lam: float) -> tuple[torch.Tensor, torch.Tensor]:
    """Advantages and returns for terminal episodes (bootstrap value 0)."""
    t_len = rewards.shape[0]
    adv = torch.zeros_like(rewards)
    gae = torch.zeros_like(rewards[0])
    for t in reversed(range(t_len)):
        next_value = values[t + 1] if t + 1 < t_len else torch.zeros_like(values[0])
        delta = rewards[t] + gamma * next_value - values[t]
        gae = delta + gamma * lam * gae
        adv[t] = gae
    return adv, adv + values


def ppo_update(policy: PolicyNet, buffer: RolloutBuffer, config: PPOConfig,
               adam: dict | None = None) -> dict:
    """Clipped-surrogate update over the whole rollout for `epochs` passes."""
    visual, binaural, monaural, actions, old_logp, values, rewards = buffer.stacked()
    adv, returns = compute_gae(rewards, values, config.gamma, config.gae_lambda)
    if adv.numel() > 1 and adv.std() > 0:
        adv_n = (adv - adv.mean()) / (adv.std() + 1e-8)
    else:
        adv_n = adv
    params = [p for p in policy.parameters() if p.requires_grad]
    if adam is None:
        adam = nncore.adam_state(params)
    hidden = policy.initial_hidden(visual.shape[1])
    metrics = {}
    for epoch in range(config.epochs):
        logits, value_pred = policy.sequence(visual, binaural, monaural, hidden)
        logp_all = torch.log_softmax(logits, dim=-1)
        logp = logp_all.gather(-1, actions[..., None])[..., 0]
        entropy = -(logp_all.exp() * logp_all).sum(-1).mean()
        ratio = torch.exp(logp - old_logp)
        s1 = ratio * adv_n
        s2 = torch.clamp(ratio, 1 - config.clip_eps, 1 + config.clip_eps) * adv_n
        policy_loss = -torch.min(s1, s2).mean()
        value_loss = (value_pred - returns).pow(2).mean()
        loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy
        if not torch.isfinite(loss):
            raise nncore.NumericError(
                f"non-finite PPO loss (policy={float(policy_loss)}, value={float(value_loss)})"
            )
        policy.zero_grad()
        loss.backward()
        grads = [p.grad for p in params]
        nncore.clip_grad_norm(grads, config.grad_clip)
        nncore.adam_step(params, grads, config.lr, adam)
        if epoch == 0:
            metrics = {
                "policy_loss": float(policy_loss.detach()),
                "value_loss": float(value_loss.detach()),
                "entropy": float(entropy.detach()), "mean_reward": float(rewards.mean()),
                "mean_ratio": float(ratio.detach().mean()),
            }
    return metrics
