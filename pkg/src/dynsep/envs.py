"""Episode sampling and the step loop.

An episode drops k dynamic sources in a scene (pairwise geodesic
distance >= a minimum, default 8 m), co-locates the agent with the
target, and runs a 20-step budget. Each step advances every source by
one 1 s segment and re-renders the binaural mixture at the post-action
pose. Ground truth (target monaural and binaural magnitudes) is exposed
only in training mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import acoustics, dsp
from .acoustics import AgentPose, GridScene, HEADING_VEC
from .bank import Clip, SoundBank, sample_segment
from .dsp import SAMPLE_RATE, DegenerateInputError, InvalidInputError


class Action(Enum):
    MOVE_FORWARD = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2
    NO_OP = 3  # scripted baselines only; not part of the policy action space


POLICY_ACTIONS = (Action.MOVE_FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT)

VISUAL_SIZE = 16
AGENT_RASTER_POS = (12, 8)  # agent cell inside the egocentric window


class SamplingError(RuntimeError):
    pass


class LifecycleError(RuntimeError):
    pass


@dataclass(frozen=True)
class SourceSpec:
    clip: Clip
    start_offset_s: float
    location: tuple[int, int]
    category: str
    label: int


@dataclass(frozen=True)
class EpisodeSpec:
    scene: GridScene
    start_pose: AgentPose
    sources: tuple[SourceSpec, ...]
    target_index: int
    budget: int = 20
    noise_snr_db: float | None = None
    noise_seed: int = 0

    @property
    def target(self) -> SourceSpec:
        return self.sources[self.target_index]


@dataclass
class Observation:
    mix_mag: np.ndarray       # (32, 32, 32) sliced binaural magnitudes, not compressed
    mix_phase: np.ndarray     # (512, 32, 2) complex mixture spectrogram (phase carrier)
    visual: np.ndarray        # (16, 16) egocentric occupancy raster
    target_label: int
    step: int

    def mix_mag_log(self) -> np.ndarray:
        return dsp.log_compress(self.mix_mag)


@dataclass
class StepResult:
    observation: Observation
    collision: bool
    done: bool
    ground_truth: dict | None = None  # {'monaural_mag','binaural_mag','monaural_wav'}


def sample_episode(bank: SoundBank, scene_pool: list[GridScene], config, rng) -> EpisodeSpec:
    """Sample one episode subject to the inter-source distance constraint."""
    k = getattr(config, "k", 2)
    min_dist = getattr(config, "min_source_distance", 8.0)
    budget = getattr(config, "budget", 20)
    split = getattr(config, "split", "train")
    heard = getattr(config, "heard", None)
    max_retries = getattr(config, "max_retries", 200)

    scene = scene_pool[rng.integers(len(scene_pool))]
    free = acoustics._largest_component(scene)
    free = sorted(free)

    target_cats = bank.categories("voice", heard=heard) + bank.categories("music", heard=heard)
    all_cats = bank.categories(heard=heard)
    if not target_cats or len(all_cats) < k:
        raise SamplingError("bank has too few categories for this episode config")

    for _ in range(max_retries):
        target_cat = target_cats[rng.integers(len(target_cats))]
        others = [c for c in all_cats if c != target_cat]
        rng.shuffle(others)
        cats = [target_cat] + others[: k - 1]
        locs = [free[i] for i in rng.choice(len(free), size=k, replace=False)]
        ok = all(
            acoustics.geodesic_distance(scene, locs[i], locs[j]) >= min_dist
            for i in range(k) for j in range(i + 1, k)
        )
        if not ok:
            continue
        sources = []
        for cat, loc in zip(cats, locs):
            clips = bank.get(cat, split)
            if not clips:
                raise SamplingError(f"no {split} clips for category {cat}")
            clip = clips[rng.integers(len(clips))]
            offset = float(rng.uniform(0.0, clip.duration_s))
            sources.append(SourceSpec(clip=clip, start_offset_s=offset, location=loc,
                                      category=cat, label=clip.label))
        heading = acoustics.HEADINGS[rng.integers(4)]
        return EpisodeSpec(
            scene=scene,
            start_pose=AgentPose(node=sources[0].location, heading=heading),
            sources=tuple(sources), target_index=0, budget=budget,
        )
    raise SamplingError(f"distance constraint unsatisfiable after {max_retries} retries")


def render_visual(scene: GridScene, pose: AgentPose) -> np.ndarray:
    """Egocentric occupancy window, forward = up, out-of-bounds = occupied."""
    raster = np.ones((VISUAL_SIZE, VISUAL_SIZE), dtype=np.float32)
    fr, fc = HEADING_VEC[pose.heading]
    lr, lc = -fc, fr  # agent-left in grid coords
    ar, ac = AGENT_RASTER_POS
    for i in range(VISUAL_SIZE):
        for j in range(VISUAL_SIZE):
            fwd = ar - i       # rows above the agent cell are ahead
            lat = ac - j       # columns left of center are to the agent's left
            cell = (pose.node[0] + fwd * fr + lat * lr,
                    pose.node[1] + fwd * fc + lat * lc)
            raster[i, j] = 0.0 if scene.is_free(cell) else 1.0
    return raster


def _turn(heading: int, action: Action) -> int:
    if action is Action.TURN_LEFT:
        return (heading - 90) % 360
    if action is Action.TURN_RIGHT:
        return (heading + 90) % 360
    return heading


class Episode:
    """Stateful step loop over one EpisodeSpec."""

    def __init__(self, spec: EpisodeSpec, training: bool = False):
        self.spec = spec
        self.training = training
        self.pose: AgentPose | None = None
        self.t = -1
        self.done = False
        self._noise_rng: np.random.Generator | None = None
        self._trace: list[dict] = []

    # -- lifecycle ---------------------------------------------------------

    def reset(self) -> Observation:
        self.pose = self.spec.start_pose
        self.t = 0
        self.done = False
        self._noise_rng = np.random.default_rng(self.spec.noise_seed)
        self._trace = []
        return self._observe()

    def step(self, action: Action) -> StepResult:
        if self.pose is None:
            raise LifecycleError("step before reset")
        if self.done:
            raise LifecycleError("step after episode end")
        collision = False
        if action in (Action.TURN_LEFT, Action.TURN_RIGHT):
            self.pose = AgentPose(self.pose.node, _turn(self.pose.heading, action))
        elif action is Action.MOVE_FORWARD:
            fr, fc = HEADING_VEC[self.pose.heading]
            nxt = (self.pose.node[0] + fr, self.pose.node[1] + fc)
            if self.spec.scene.is_free(nxt):
                self.pose = AgentPose(nxt, self.pose.heading)
            else:
                collision = True
        self.t += 1
        self.done = self.t >= self.spec.budget
        obs = self._observe()
        gt = self.ground_truth() if self.training else None
        self._trace.append({"t": self.t,
                            "pose": [int(self.pose.node[0]), int(self.pose.node[1]),
                                     self.pose.heading],
                            "action": action.name, "collision": collision})
        return StepResult(observation=obs, collision=collision, done=self.done,
                          ground_truth=gt)

    # -- rendering ---------------------------------------------------------

    def _source_segment(self, src: SourceSpec) -> np.ndarray:
        return sample_segment(src.clip, src.start_offset_s, self.t)

    def mixture_waveform(self) -> np.ndarray:
        """Binaural mixture at the current pose, (16000, 2)."""
        spatialized = []
        for src in self.spec.sources:
            rir = acoustics.compute_rir(self.spec.scene, src.location, self.pose)
            spatialized.append(acoustics.spatialize(self._source_segment(src), rir))
        wav = acoustics.mix(spatialized)
        if self.spec.noise_snr_db is not None:
            wav = inject_noise(wav, self.spec.noise_snr_db, self._noise_rng)
        return wav

    def _observe(self) -> Observation:
        wav = self.mixture_waveform()
        spec = dsp.stft_multi(wav)
        mag = dsp.slice_reshape(np.abs(spec))
        return Observation(mix_mag=mag, mix_phase=spec,
                           visual=render_visual(self.spec.scene, self.pose),
                           target_label=self.spec.target.label, step=self.t)

    def ground_truth(self) -> dict:
        """Target monaural and binaural magnitudes for the current step."""
        target = self.spec.target
        mono = self._source_segment(target)
        mono_mag = dsp.slice_reshape(np.abs(dsp.stft_multi(mono)))
        rir = acoustics.compute_rir(self.spec.scene, target.location, self.pose)
        bino = acoustics.spatialize(mono, rir)
        bino_mag = dsp.slice_reshape(np.abs(dsp.stft_multi(bino)))
        return {"monaural_mag": mono_mag, "binaural_mag": bino_mag, "monaural_wav": mono}

    # -- tracing -----------------------------------------------------------

    def write_trace(self, path, extra_per_step: list[dict] | None = None) -> None:
        """JSONL trajectory export, one record per step."""
        records = self._trace
        if extra_per_step is not None:
            records = [{**r, **e} for r, e in zip(records, extra_per_step)]
        Path(path).write_text("\n".join(json.dumps(r) for r in records) + "\n")


def inject_noise(wav: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Additive white Gaussian noise at a fixed SNR on the time-domain signal."""
    wav = np.asarray(wav, dtype=np.float32)
    p_signal = float(np.mean(wav.astype(np.float64) ** 2))
    if p_signal <= 0.0:
        raise DegenerateInputError("cannot set an SNR against a silent signal")
    p_noise = p_signal / (10.0 ** (snr_db / 10.0))
    noise = rng.standard_normal(wav.shape)
    noise *= np.sqrt(p_noise / np.mean(noise**2))
    return (wav + noise).astype(np.float32)
