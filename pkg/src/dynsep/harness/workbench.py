"""Assembly of banks, scene pools, models, and episode samplers from a config."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .. import acoustics, bank, envs, nncore
from ..agents import PolicyNet
from ..separator import DynamicSeparator, PassiveSeparator, TransformerMemory
from .config import ExperimentConfig


def build_bank(config: ExperimentConfig) -> bank.SoundBank:
    return bank.build_bank(bank.BankConfig(
        voice_categories=config.voice_categories,
        music_categories=config.music_categories,
        background_categories=config.background_categories,
        clips_per_category=config.clips_per_category,
        unheard_voice_categories=config.unheard_voice_categories,
        seed=config.bank_seed,
        duration_s=config.clip_duration_s,
    ))


def build_scene_pool(config: ExperimentConfig) -> list[acoustics.GridScene]:
    return [acoustics.generate_scene(s, tuple(config.scene_size), config.scene_rooms)
            for s in config.scene_seeds]


def build_models(config: ExperimentConfig, with_memory: bool = True,
                 refine_horizon: int | None = None):
    passive = PassiveSeparator(config.preset)
    memory = None
    if with_memory:
        horizon = config.refine_horizon if refine_horizon is None else refine_horizon
        memory = TransformerMemory(config.preset, refine_horizon=horizon)
    separator = DynamicSeparator(passive, memory, memory_size=config.memory_size)
    policy = PolicyNet(config.preset)
    return separator, policy


class EpisodeSampler:
    """Deterministic stream of episode specs for a config and seed."""

    def __init__(self, config: ExperimentConfig, sound_bank, scene_pool, seed: int,
                 split: str | None = None, training: bool = True):
        self.config = config
        self.bank = sound_bank
        self.scene_pool = scene_pool
        self.rng = np.random.default_rng(seed)
        self.split = split or config.split
        self.training = training

    def spec(self) -> envs.EpisodeSpec:
        class _Cfg:
            pass
        c = _Cfg()
        c.k = self.config.k
        c.min_source_distance = self.config.min_source_distance
        c.budget = self.config.budget
        c.split = self.split
        c.heard = self.config.heard
        c.max_retries = 400
        spec = envs.sample_episode(self.bank, self.scene_pool, c, self.rng)
        if self.config.noise_snr_db is not None:
            spec = envs.EpisodeSpec(
                scene=spec.scene, start_pose=spec.start_pose, sources=spec.sources,
                target_index=spec.target_index, budget=spec.budget,
                noise_snr_db=self.config.noise_snr_db,
                noise_seed=int(self.rng.integers(2**31)),
            )
        return spec

    def __call__(self) -> envs.Episode:
        return envs.Episode(self.spec(), training=self.training)


def save_models(directory, separator: DynamicSeparator, policy: PolicyNet | None,
                meta: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nncore.save_checkpoint(directory / "passive.ckpt", separator.passive, meta)
    if separator.memory is not None:
        nncore.save_checkpoint(directory / "memory.ckpt", separator.memory, meta)
    if policy is not None:
        nncore.save_checkpoint(directory / "policy.ckpt", policy, meta)


def load_models(directory, config: ExperimentConfig):
    directory = Path(directory)
    with_memory = (directory / "memory.ckpt").exists()
    separator, policy = build_models(config, with_memory=with_memory)
    nncore.load_checkpoint(directory / "passive.ckpt", separator.passive)
    for p in separator.passive.parameters():
        p.requires_grad_(False)
    if with_memory:
        nncore.load_checkpoint(directory / "memory.ckpt", separator.memory)
    if (directory / "policy.ckpt").exists():
        nncore.load_checkpoint(directory / "policy.ckpt", policy)
    return separator, policy
