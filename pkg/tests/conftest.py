"""Shared fixtures: a small sound bank, scene pool, and a pretrained separator.

The pretrained separator is expensive (a couple of minutes on CPU) and is
built once per session; everything that needs trained weights shares it.
"""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest
import torch

from dynsep import acoustics
from dynsep.bank import BankConfig, build_bank
from dynsep.training import PretrainConfig, pretrain_passive, sample_static_dataset
from dynsep.separator import PassiveSeparator

torch.set_num_threads(4)

BENCH_SCENE_SEEDS = (3, 11)


def episode_config(**overrides):
    """Episode-sampling knobs in the shape sample_episode expects."""
    base = dict(k=2, min_source_distance=8.0, budget=20, split="test",
                heard=None, max_retries=400)
    base.update(overrides)
    return SimpleNamespace(**base)


@pytest.fixture(scope="session")
def bench_bank():
    return build_bank(BankConfig(voice_categories=1, music_categories=1,
                                 background_categories=0, clips_per_category=5,
                                 seed=0))


@pytest.fixture(scope="session")
def bench_scenes():
    return [acoustics.generate_scene(s, (20, 20), 4) for s in BENCH_SCENE_SEEDS]


@pytest.fixture(scope="session")
def bench_datasets(bench_bank, bench_scenes):
    rng = np.random.default_rng(0)
    train = sample_static_dataset(bench_bank, bench_scenes, 1500, rng, "train")
    val = sample_static_dataset(bench_bank, bench_scenes, 128, rng, "val")
    return train, val


@pytest.fixture(scope="session")
def bench_passive(bench_datasets):
    """Passive separator trained on the benchmark bank; parameters frozen."""
    train, val = bench_datasets
    model = PassiveSeparator("tiny")
    torch.manual_seed(0)
    pretrain_passive(model, train, val,
                     PretrainConfig(n_train=1500, n_val=128, max_updates=3000,
                                    eval_every=200, patience=6, seed=0))
    return model
