"""Evaluation: greedy episodes, per-step metrics from the latest refinements."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .. import metrics, separator as sep_mod
from ..agents import PolicyNet, ScriptedAgent, act, obs_to_tensors
from ..agents.baselines import SCRIPTED_KINDS
from ..bank import ConfigurationError
from ..envs import Action, Episode
from ..separator import DynamicSeparator, reconstruct_waveform
from .config import ExperimentConfig

AGENT_KINDS = SCRIPTED_KINDS + ("policy", "novelty-policy", "oracle")


@dataclass
class EpisodeResult:
    episode_index: int
    seed: int
    si_sdr: float           # mean over steps
    stft_distance: float    # mean over steps
    per_step_si_sdr: list[float] = field(default_factory=list)
    per_step_stft: list[float] = field(default_factory=list)
    collisions: int = 0


@dataclass
class EvalReport:
    results: list[EpisodeResult]
    failures: int = 0

    @property
    def mean_si_sdr(self) -> float:
        return float(np.mean([r.si_sdr for r in self.results]))

    @property
    def mean_stft_distance(self) -> float:
        return float(np.mean([r.stft_distance for r in self.results]))

    def to_rows(self) -> list[dict]:
        return [{"episode": r.episode_index, "seed": r.seed,
                 "si_sdr": f"{r.si_sdr:.6f}",
                 "stft_distance": f"{r.stft_distance:.6f}",
                 "collisions": r.collisions} for r in self.results]

    def write_csv(self, path) -> None:
        rows = self.to_rows()
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(
                f, fieldnames=["episode", "seed", "si_sdr", "stft_distance", "collisions"])
            writer.writeheader()
            writer.writerows(rows)


def run_episode(episode: Episode, separator: DynamicSeparator,
                agent_kind: str, policy: PolicyNet | None = None,
                use_initial: bool = False, agent_seed: int = 0) -> dict:
    """One greedy episode; returns per-step metric arrays and the trace."""
    if agent_kind not in AGENT_KINDS:
        raise ConfigurationError(f"unknown agent kind {agent_kind!r}")
    scripted = None
    if agent_kind in SCRIPTED_KINDS:
        scripted = ScriptedAgent(agent_kind, np.random.default_rng(agent_seed))
    elif agent_kind != "oracle" and policy is None:
        raise ConfigurationError(f"agent {agent_kind!r} needs a policy checkpoint")

    obs = episode.reset()
    separator.reset()
    b_est, m_est = separator.observe(obs.mix_mag, obs.target_label, obs.step)
    phases = {}
    truth_mag = {}
    truth_wav = {}
    hidden = policy.initial_hidden() if policy is not None else None
    collisions = 0
    actions = []
    while not episode.done:
        if scripted is not None:
            action = scripted.action(episode)
        elif agent_kind == "oracle":
            action = Action.NO_OP
        else:
            tensors = obs_to_tensors(obs.visual, b_est, m_est)
            idx, _, _, hidden = act(policy, tensors, hidden, mode="greedy")
            action = Action(idx)
        result = episode.step(action)
        actions.append(action.name)
        collisions += int(result.collision)
        obs = result.observation
        b_est, m_est = separator.observe(obs.mix_mag, obs.target_label, obs.step)
        gt = result.ground_truth or episode.ground_truth()
        phases[obs.step] = obs.mix_phase
        truth_mag[obs.step] = gt["monaural_mag"]
        truth_wav[obs.step] = gt["monaural_wav"]

    steps = sorted(truth_mag)
    si, dist, rewards = [], [], []
    for t in steps:
        if agent_kind == "oracle":
            pred = truth_mag[t]
        elif use_initial:
            pred = separator.initial[t]
        else:
            pred = separator.latest[t]
        dist.append(metrics.stft_distance(pred, truth_mag[t]))
        rewards.append(-float(np.mean(np.abs(pred - truth_mag[t]))))
        if agent_kind == "oracle":
            wav = truth_wav[t]
        else:
            wav = reconstruct_waveform(pred, phases[t])
        si.append(metrics.si_sdr(wav, truth_wav[t]))
    return {"si_sdr": si, "stft": dist, "rewards": rewards,
            "collisions": collisions, "actions": actions}


def evaluate_agent(config: ExperimentConfig, separator: DynamicSeparator,
                   policy: PolicyNet | None, episode_specs_by_seed: dict,
                   use_initial: bool | None = None) -> EvalReport:
    """Evaluate over pre-sampled episode specs, keyed by seed."""
    use_initial = config.use_initial_estimates if use_initial is None else use_initial
    results = []
    failures = 0
    for seed in sorted(episode_specs_by_seed):
        for i, spec in enumerate(episode_specs_by_seed[seed]):
            try:
                out = run_episode(Episode(spec, training=True), separator,
                                  config.agent, policy, use_initial, agent_seed=seed)
            except Exception as exc:  # record and exclude, never silently drop
                warnings.warn(f"episode {i} (seed {seed}) failed: {exc}")
                failures += 1
                continue
            results.append(EpisodeResult(
                episode_index=i, seed=seed,
                si_sdr=float(np.mean(out["si_sdr"])),
                stft_distance=float(np.mean(out["stft"])),
                per_step_si_sdr=out["si_sdr"], per_step_stft=out["stft"],
                collisions=out["collisions"]))
    return EvalReport(results=results, failures=failures)


def write_manifest(path, config: ExperimentConfig, extra: dict | None = None) -> None:
    record = {"config": json.loads(config.to_json()),
              "config_digest": config.digest(),
              "format_version": 1}
    if extra:
        record.update(extra)
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True))
