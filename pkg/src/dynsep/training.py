"""Passive-separator pretraining on a static dataset.

Data points are sampled by independently instantiating a scene, source
count, source locations and categories, clip offsets, a target, and an
agent pose, then rendering one mixture step. The passive stage trains
with Adam (lr 5e-4, global grad-norm clip 0.8) on the summed binaural
and monaural mean-L1 loss until the update budget or early stopping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import acoustics, dsp, envs, nncore
from .bank import SoundBank
from .envs import Episode, EpisodeSpec, SourceSpec
from .separator import PassiveSeparator, passive_loss


@dataclass
class PretrainConfig:
    n_train: int = 1500
    n_val: int = 200
    batch_size: int = 16
    lr: float = 5e-4
    grad_clip: float = 0.8
    max_updates: int = 2000
    eval_every: int = 100
    patience: int = 8         # eval rounds without val improvement
    k_choices: tuple[int, ...] = (1, 2)
    seed: int = 0


@dataclass
class StaticDataset:
    mix_mag: np.ndarray       # (N, 32, 32, 32)
    binaural: np.ndarray      # (N, 32, 32, 32)
    monaural: np.ndarray      # (N, 32, 32, 16)
    label: np.ndarray         # (N,)
    manifest: list[dict] = field(default_factory=list)


def sample_static_dataset(bank: SoundBank, scene_pool: list[acoustics.GridScene],
                          n: int, rng: np.random.Generator,
                          split: str = "train",
                          k_choices: tuple[int, ...] = (1, 2),
                          absent_frac: float = 0.1) -> StaticDataset:
    """Render n independent single-step mixtures with ground truth.

    A fraction `absent_frac` of examples drops the co-located target from a
    two-source mixture but keeps its label, with all-zero targets, so the
    trained model learns to emit silence when the requested source is not
    playing (all that remains audible is the distant distractor).
    """
    mixes, binaurals, monaurals, labels, manifest = [], [], [], [], []
    class _Cfg:
        min_source_distance = 8.0
        budget = 1
        heard = None
        max_retries = 400
    cfg = _Cfg()
    cfg.split = split
    while len(mixes) < n:
        absent = rng.random() < absent_frac
        cfg.k = 2 if absent else int(rng.choice(k_choices))
        if cfg.k < 2:
            # single-source point: sample with k=2 machinery then drop the distractor
            cfg.k = 2
            spec = envs.sample_episode(bank, scene_pool, cfg, rng)
            spec = EpisodeSpec(scene=spec.scene, start_pose=spec.start_pose,
                               sources=spec.sources[:1], target_index=0, budget=1)
        else:
            spec = envs.sample_episode(bank, scene_pool, cfg, rng)
        absent_label = None
        if absent:
            target, distractor = spec.sources[0], spec.sources[1]
            if target.label == distractor.label:
                continue
            # keep the target's label but silence it: only the distant
            # distractor remains audible
            absent_label = int(target.label)
            spec = EpisodeSpec(scene=spec.scene, start_pose=spec.start_pose,
                               sources=spec.sources[1:], target_index=0, budget=1)
        # poses match deployment: episodes start co-located with the target
        # and wander only a few cells, so sample the start node half the time
        # and otherwise a nearby free cell
        start = spec.start_pose.node
        if rng.random() < 0.5:
            node = start
        else:
            free = sorted(acoustics._largest_component(spec.scene))
            near = [c for c in free
                    if acoustics.euclidean_distance(c, start) <= 4.0]
            node = near[rng.integers(len(near))]
        pose = acoustics.AgentPose(node, acoustics.HEADINGS[rng.integers(4)])
        spec = EpisodeSpec(scene=spec.scene, start_pose=pose, sources=spec.sources,
                           target_index=0, budget=1)
        ep = Episode(spec, training=True)
        obs = ep.reset()
        gt = ep.ground_truth()
        label = obs.target_label
        binaural_mag, monaural_mag = gt["binaural_mag"], gt["monaural_mag"]
        if absent_label is not None:
            label = absent_label
            binaural_mag = np.zeros_like(binaural_mag)
            monaural_mag = np.zeros_like(monaural_mag)
        mixes.append(obs.mix_mag)
        binaurals.append(binaural_mag)
        monaurals.append(monaural_mag)
        labels.append(label)
        manifest.append({
            "scene_seed": spec.scene.seed,
            "pose": [int(pose.node[0]), int(pose.node[1]), pose.heading],
            "sources": [{"clip": s.clip.id, "offset": s.start_offset_s,
                         "loc": [int(x) for x in s.location]} for s in spec.sources],
            "target_label": int(label),
        })
    return StaticDataset(
        mix_mag=np.stack(mixes).astype(np.float32),
        binaural=np.stack(binaurals).astype(np.float32),
        monaural=np.stack(monaurals).astype(np.float32),
        label=np.array(labels, dtype=np.float32),
        manifest=manifest,
    )


def _eval_loss(model: PassiveSeparator, data: StaticDataset, batch: int = 32) -> float:
    total, count = 0.0, 0
    with torch.no_grad():
        for i in range(0, data.mix_mag.shape[0], batch):
            mix = torch.from_numpy(data.mix_mag[i : i + batch])
            lab = torch.from_numpy(data.label[i : i + batch])
            b, m = model(mix, lab)
            loss = passive_loss(b, torch.from_numpy(data.binaural[i : i + batch]),
                                m, torch.from_numpy(data.monaural[i : i + batch]))
            total += float(loss) * mix.shape[0]
            count += mix.shape[0]
    return total / count


class TrainingError(RuntimeError):
    pass


def pretrain_passive(model: PassiveSeparator, train: StaticDataset, val: StaticDataset,
                     config: PretrainConfig, log=None) -> dict:
    """Train the passive stage; returns {'val_loss', 'updates', 'history'}."""
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    params = [p for p in model.parameters() if p.requires_grad]
    state = nncore.adam_state(params)
    n = train.mix_mag.shape[0]
    best_val = float("inf")
    best_state = None
    stale = 0
    history = []
    for update in range(1, config.max_updates + 1):
        idx = rng.integers(0, n, size=config.batch_size)
        mix = torch.from_numpy(train.mix_mag[idx])
        lab = torch.from_numpy(train.label[idx])
        b, m = model(mix, lab)
        loss = passive_loss(b, torch.from_numpy(train.binaural[idx]),
                            m, torch.from_numpy(train.monaural[idx]))
        if not torch.isfinite(loss):
            raise TrainingError(f"non-finite loss at update {update}")
        model.zero_grad()
        loss.backward()
        grads = [p.grad for p in params]
        nncore.clip_grad_norm(grads, config.grad_clip)
        nncore.adam_step(params, grads, config.lr, state)
        if update % config.eval_every == 0 or update == config.max_updates:
            val_loss = _eval_loss(model, val)
            history.append({"update": update, "train_loss": float(loss.detach()),
                            "val_loss": val_loss})
            if log:
                log(history[-1])
            if val_loss < best_val - 1e-5:
                best_val = val_loss
                best_state = {k: v.clone() for k, v in model.state_dict().items()}
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    if best_state is not None:
        model.load_state_dict(best_state)
    for p in model.parameters():
        p.requires_grad_(False)
    return {"val_loss": best_val, "updates": history[-1]["update"] if history else 0,
            "history": history}


def save_dataset_manifest(data: StaticDataset, path) -> None:
    Path(path).write_text(json.dumps(data.manifest, indent=1))
