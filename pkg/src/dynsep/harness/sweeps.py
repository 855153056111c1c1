"""Single-parameter sweeps and the fixed-pose separation heatmap."""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from .. import acoustics, envs
from ..bank import ConfigurationError
from ..envs import Episode
from .config import ExperimentConfig
from .evaluate import evaluate_agent, run_episode
from .workbench import EpisodeSampler

SWEEPABLE = ("refine_horizon", "noise_snr_db", "k", "min_source_distance", "memory_size")


def _sample_specs(config: ExperimentConfig, sound_bank, scene_pool):
    by_seed = {}
    for seed in config.seeds:
        sampler = EpisodeSampler(config, sound_bank, scene_pool, seed=seed)
        by_seed[seed] = [sampler.spec() for _ in range(config.episodes)]
    return by_seed


def run_sweep(config: ExperimentConfig, separator, policy, sound_bank, scene_pool,
              param: str, values: list, out_csv) -> list[dict]:
    """Evaluate once per value of exactly one varied parameter; CSV row each."""
    if param not in SWEEPABLE:
        raise ConfigurationError(f"cannot sweep {param!r}; choose from {SWEEPABLE}")
    rows = []
    base_horizon = separator.memory.refine_horizon if separator.memory else None
    for value in values:
        cfg = dataclasses.replace(config, **{param: value}).validate()
        if param == "refine_horizon" and separator.memory is not None:
            separator.memory.refine_horizon = int(value)
        specs = _sample_specs(cfg, sound_bank, scene_pool)
        report = evaluate_agent(cfg, separator, policy, specs)
        rows.append({
            "param": param, "value": value,
            "mean_si_sdr": f"{report.mean_si_sdr:.6f}",
            "mean_stft_distance": f"{report.mean_stft_distance:.6f}",
            "episodes": len(report.results), "failures": report.failures,
            "config_digest": cfg.digest(),
        })
    if separator.memory is not None and base_horizon is not None:
        separator.memory.refine_horizon = base_horizon
    fields = list(rows[0].keys())
    with open(out_csv, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    return rows


def run_heatmap(config: ExperimentConfig, separator, sound_bank, scene_pool,
                out_csv, seed: int = 0) -> list[dict]:
    """Separation quality of a standing agent at every free cell, fixed sources."""
    sampler = EpisodeSampler(config, sound_bank, scene_pool, seed=seed)
    base = sampler.spec()
    cells = sorted(acoustics._largest_component(base.scene))
    rows = []
    for cell in cells:
        spec = envs.EpisodeSpec(
            scene=base.scene,
            start_pose=acoustics.AgentPose(cell, 0),
            sources=base.sources, target_index=base.target_index,
            budget=config.budget, noise_snr_db=base.noise_snr_db,
            noise_seed=base.noise_seed)
        out = run_episode(Episode(spec, training=True), separator, "stand")
        rows.append({"row": cell[0], "col": cell[1],
                     "si_sdr": f"{float(np.mean(out['si_sdr'])):.6f}",
                     "stft_distance": f"{float(np.mean(out['stft'])):.6f}"})
    with open(out_csv, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["row", "col", "si_sdr", "stft_distance"])
        writer.writeheader()
        writer.writerows(rows)
    return rows


def run_trace(config: ExperimentConfig, separator, policy, sound_bank, scene_pool,
              out_jsonl, seed: int = 0) -> None:
    """Export one episode's JSONL trajectory with per-step metrics and reward."""
    sampler = EpisodeSampler(config, sound_bank, scene_pool, seed=seed)
    episode = Episode(sampler.spec(), training=True)
    out = run_episode(episode, separator, config.agent, policy,
                      config.use_initial_estimates, agent_seed=seed)
    extra = [{"si_sdr": s, "stft_distance": d, "reward": r}
             for s, d, r in zip(out["si_sdr"], out["stft"], out["rewards"])]
    episode.write_trace(out_jsonl, extra)
