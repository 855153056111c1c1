"""Rollout collection, the dense separation reward, and joint training.

Joint training alternates strictly: one supervised update of the
transformer memory on the rollout just collected, then one PPO update of
the motion policy on the same rollout, with the passive stage frozen
throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .. import nncore
from ..dsp import InvalidInputError
from ..envs import Action, Episode
from ..separator import DynamicSeparator, transformer_loss
from .baselines import NoveltyCounter, novelty_reward
from .policy import PolicyNet, act, obs_to_tensors
from .ppo import PPOConfig, RolloutBuffer, ppo_update


def compute_reward(refined: np.ndarray, truth: np.ndarray) -> float:
    """Dense reward: negative mean-elementwise L1 of the refined estimate."""
    refined = np.asarray(refined)
    truth = np.asarray(truth)
    if refined.shape != truth.shape:
        raise InvalidInputError("reward shape mismatch")
    return -float(np.mean(np.abs(refined - truth)))


@dataclass
class EpisodeRecord:
    """Everything joint training needs from one collected episode."""

    steps: list            # per-step dicts for the PPO buffer
    initial: dict          # step -> initial monaural estimate (numpy)
    truths: dict           # step -> ground-truth monaural magnitude (numpy)
    mean_reward: float
    collisions: int


def collect_episode(episode: Episode, separator: DynamicSeparator, policy: PolicyNet,
                    rng: torch.Generator, reward_kind: str = "separation",
                    mode: str = "sample") -> EpisodeRecord:
    """Run one full episode with the current policy; separator in eval mode."""
    obs = episode.reset()
    separator.reset()
    b_est, m_est = separator.observe(obs.mix_mag, obs.target_label, obs.step)
    truths = {0: episode.ground_truth()["monaural_mag"]}
    counter = NoveltyCounter()
    counter.visit(episode.pose.node)
    hidden = policy.initial_hidden()
    steps = []
    collisions = 0
    while not episode.done:
        tensors = obs_to_tensors(obs.visual, b_est, m_est)
        action, logp, value, hidden = act(policy, tensors, hidden, mode, rng)
        result = episode.step(Action(action))
        collisions += int(result.collision)
        obs = result.observation
        b_est, m_est = separator.observe(obs.mix_mag, obs.target_label, obs.step)
        truth = result.ground_truth["monaural_mag"]
        truths[obs.step] = truth
        if reward_kind == "novelty":
            reward = novelty_reward(counter, episode.pose.node)
        else:
            reward = compute_reward(m_est, truth)
        steps.append({"visual": tensors[0], "binaural": tensors[1],
                      "monaural": tensors[2], "action": action,
                      "log_prob": logp, "value": value, "reward": reward})
    return EpisodeRecord(steps=steps, initial=dict(separator.initial), truths=truths,
                         mean_reward=float(np.mean([s["reward"] for s in steps])),
                         collisions=collisions)


def memory_update(separator: DynamicSeparator, records: list[EpisodeRecord],
                  lr: float, adam: dict | None = None) -> dict:
    """One supervised update of the transformer memory on collected rollouts."""
    memory = separator.memory
    if memory is None:
        return {"memory_loss": float("nan")}
    params = [p for p in memory.parameters() if p.requires_grad]
    if adam is None:
        adam = nncore.adam_state(params)
    total = 0.0
    n_terms = 0
    memory.zero_grad()
    loss_acc = None
    for rec in records:
        order = sorted(rec.initial)
        ests = torch.from_numpy(np.stack([rec.initial[s] for s in order]))
        for i, t in enumerate(order):
            lo = max(0, i - separator.bank.capacity)
            window = ests[lo : i + 1]
            steps_t = torch.tensor(order[lo : i + 1], dtype=torch.long)
            refined = memory(window, steps_t)
            sel = order[lo : i + 1][-refined.shape[0]:]
            truth = torch.from_numpy(np.stack([rec.truths[s] for s in sel]))
            loss = transformer_loss(refined, truth)
            loss_acc = loss if loss_acc is None else loss_acc + loss
            total += float(loss.detach())
            n_terms += 1
    loss_acc = loss_acc / n_terms
    loss_acc.backward()
    grads = [p.grad for p in params]
    nncore.adam_step(params, grads, lr, adam)
    return {"memory_loss": total / n_terms}


@dataclass
class JointConfig:
    alternations: int = 200
    episodes_per_update: int = 2
    memory_lr: float = 5e-3
    ppo: PPOConfig = None
    reward_kind: str = "separation"
    train_memory: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.ppo is None:
            self.ppo = PPOConfig()


def joint_train(episode_sampler, separator: DynamicSeparator, policy: PolicyNet,
                config: JointConfig, log=None) -> list[dict]:
    """Alternate memory and policy updates; returns the per-update log."""
    torch.manual_seed(config.seed)
    gen = torch.Generator().manual_seed(config.seed)
    mem_adam = None
    ppo_adam = nncore.adam_state([p for p in policy.parameters() if p.requires_grad])
    history = []
    for update in range(config.alternations):
        records = []
        buffer = RolloutBuffer()
        for _ in range(config.episodes_per_update):
            rec = collect_episode(episode_sampler(), separator, policy, gen,
                                  reward_kind=config.reward_kind)
            records.append(rec)
            buffer.add_episode(rec.steps)
        row = {"update": update,
               "mean_reward": float(np.mean([r.mean_reward for r in records])),
               "collisions": int(np.sum([r.collisions for r in records]))}
        if config.train_memory and separator.memory is not None:
            if mem_adam is None:
                mem_adam = nncore.adam_state(
                    [p for p in separator.memory.parameters() if p.requires_grad])
            row.update(memory_update(separator, records, config.memory_lr, mem_adam))
        row.update(ppo_update(policy, buffer, config.ppo, ppo_adam))
        history.append(row)
        if log:
            log(row)
    return history
