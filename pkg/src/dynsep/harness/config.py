"""Experiment configuration: JSON in, validated dataclass out."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..bank import ConfigurationError


@dataclass
class ExperimentConfig:
    preset: str = "tiny"
    # sound bank
    voice_categories: int = 2
    music_categories: int = 1
    background_categories: int = 1
    clips_per_category: int = 5
    unheard_voice_categories: int = 0
    bank_seed: int = 0
    clip_duration_s: float = 20.0
    # scenes
    scene_seeds: tuple[int, ...] = (3, 11)
    scene_size: tuple[int, int] = (20, 20)
    scene_rooms: int = 4
    # episodes
    k: int = 2
    min_source_distance: float = 8.0
    budget: int = 20
    noise_snr_db: float | None = None
    # separator
    memory_size: int = 19
    refine_horizon: int = 14
    # training
    pretrain_updates: int = 2000
    pretrain_examples: int = 1500
    alternations: int = 200
    episodes_per_update: int = 2
    # evaluation
    agent: str = "policy"
    episodes: int = 50
    seeds: tuple[int, ...] = (0, 1, 2)
    split: str = "test"
    heard: bool | None = None
    use_initial_estimates: bool = False  # metric past steps from initial, not refined

    def validate(self) -> "ExperimentConfig":
        checks = [
            (self.refine_horizon <= self.memory_size, "refine_horizon",
             "refine horizon must not exceed memory size"),
            (self.budget >= 1, "budget", "budget must be >= 1"),
            (self.k >= 2, "k", "episodes need at least 2 sources"),
            (self.episodes >= 1, "episodes", "need at least 1 episode"),
        ]
        for ok, fld, msg in checks:
            if not ok:
                raise ConfigurationError(f"{fld}: {msg}")
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        raw = json.loads(Path(path).read_text())
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()})
        return cfg.validate()
