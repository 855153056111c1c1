"""Procedural sound bank: long monaural clips per category with splits.

Stands in for real speech/music/background corpora. Three generator
families give the target/distractor taxonomy: voice-like (AM/FM harmonic
stacks with pauses), music-like (note sequences with ADSR envelopes) and
background (a 5 s filtered-noise pattern tiled four times). Clips can
also be ingested from WAV files and pass through the same normalization
and split machinery.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsp
from .dsp import SAMPLE_RATE, InvalidInputError

SPLITS = ("train", "val", "test")
SPLIT_RATIO = (18, 3, 4)

KINDS = ("voice", "music", "background")


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Clip:
    id: str
    category: str
    label: int
    kind: str
    waveform: np.ndarray  # float32, mono, power-normalized
    split: str
    heard: bool = True

    @property
    def duration_s(self) -> float:
        return self.waveform.shape[0] / SAMPLE_RATE


def _voice_like(rng: np.random.Generator, n: int, base_f0: float) -> np.ndarray:
    """Formant-style sum of AM/FM harmonics with pauses between phrases."""
    t = np.arange(n) / SAMPLE_RATE
    f0 = base_f0 * (1.0 + 0.15 * np.sin(2 * np.pi * rng.uniform(0.3, 1.2) * t)
                    + 0.08 * np.sin(2 * np.pi * rng.uniform(2.0, 5.0) * t))
    phase = 2 * np.pi * np.cumsum(f0) / SAMPLE_RATE
    formants = rng.uniform(0.3, 1.0, size=6) / np.arange(1, 7)
    sig = sum(a * np.sin((i + 1) * phase) for i, a in enumerate(formants))
    # syllable-rate amplitude modulation plus phrase pauses
    am = 0.55 + 0.45 * np.sin(2 * np.pi * rng.uniform(2.5, 4.5) * t + rng.uniform(0, 2 * np.pi))
    env = np.ones(n)
    pos = 0.0
    while pos < n / SAMPLE_RATE:
        phrase = rng.uniform(1.5, 3.5)
        pause = rng.uniform(0.2, 0.7)
        a = int((pos + phrase) * SAMPLE_RATE)
        b = int((pos + phrase + pause) * SAMPLE_RATE)
        env[a:b] = 0.02
        pos += phrase + pause
    return (sig * am * env).astype(np.float32)


_SCALE = np.array([0, 2, 4, 5, 7, 9, 11, 12], dtype=float)


def _music_like(rng: np.random.Generator, n: int, base_f0: float) -> np.ndarray:
    """Note sequence with ADSR envelopes and a fixed timbre."""
    timbre = rng.uniform(0.2, 1.0, size=5) / np.arange(1, 6)
    out = np.zeros(n, dtype=np.float64)
    pos = 0
    while pos < n:
        dur = int(rng.uniform(0.25, 0.8) * SAMPLE_RATE)
        dur = min(dur, n - pos)
        freq = base_f0 * 2 ** (rng.choice(_SCALE) / 12.0)
        t = np.arange(dur) / SAMPLE_RATE
        note = sum(a * np.sin(2 * np.pi * freq * (i + 1) * t) for i, a in enumerate(timbre))
        atk = max(1, int(0.02 * SAMPLE_RATE))
        rel = max(1, int(0.08 * SAMPLE_RATE))
        env = np.ones(dur)
        env[:atk] = np.linspace(0, 1, atk)
        env[-rel:] *= np.linspace(1, 0, min(rel, dur))
        out[pos : pos + dur] += note * env * rng.uniform(0.5, 1.0)
        pos += dur
    return out.astype(np.float32)


def _background(rng: np.random.Generator, n: int) -> np.ndarray:
    """5 s filtered noise-burst pattern tiled to the requested length."""
    pat_n = 5 * SAMPLE_RATE
    noise = rng.standard_normal(pat_n)
    # one-pole lowpass with a random cutoff for coarse timbre
    a = rng.uniform(0.8, 0.98)
    filt = np.empty(pat_n)
    acc = 0.0
    for i in range(pat_n):
        acc = a * acc + (1 - a) * noise[i]
        filt[i] = acc
    env = np.full(pat_n, 0.15)
    for _ in range(rng.integers(4, 9)):
        c = rng.integers(0, pat_n)
        w = int(rng.uniform(0.1, 0.6) * SAMPLE_RATE)
        env[max(0, c - w) : c + w] = rng.uniform(0.7, 1.3)
    pat = filt * env
    reps = int(np.ceil(n / pat_n))
    return np.tile(pat, reps)[:n].astype(np.float32)


def generate_clip(kind: str, seed: int, duration_s: float = 20.0,
                  category: str = "", label: int = 0, split: str = "train") -> Clip:
    """Deterministic procedural clip of at least 20 s for the given kind."""
    if kind not in KINDS:
        raise InvalidInputError(f"unknown clip kind {kind!r}")
    if duration_s < 20.0:
        raise InvalidInputError("clips must be at least 20 s long")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * SAMPLE_RATE))
    if kind == "voice":
        wav = _voice_like(rng, n, base_f0=rng.uniform(90.0, 300.0))
    elif kind == "music":
        wav = _music_like(rng, n, base_f0=rng.uniform(180.0, 440.0))
    else:
        wav = _background(rng, n)
    wav = dsp.power_normalize(wav)
    return Clip(id=f"{kind}-{seed}", category=category or kind, label=label,
                kind=kind, waveform=wav, split=split)


def sample_segment(clip: Clip, start_s: float, t: int) -> np.ndarray:
    """1 s segment beginning at start_s + t seconds, wrapping at clip end."""
    n = clip.waveform.shape[0]
    if not 0 <= start_s < clip.duration_s:
        raise InvalidInputError("start offset outside clip")
    begin = int(round(start_s * SAMPLE_RATE)) + t * SAMPLE_RATE
    idx = (begin + np.arange(SAMPLE_RATE)) % n
    return clip.waveform[idx]


@dataclass
class BankConfig:
    voice_categories: int = 8
    music_categories: int = 1
    background_categories: int = 1
    clips_per_category: int = 25
    unheard_voice_categories: int = 2
    seed: int = 0
    duration_s: float = 20.0


@dataclass
class SoundBank:
    """Immutable collection of clips indexed by category and split."""

    clips: list[Clip]
    labels: dict[str, int] = field(default_factory=dict)

    def categories(self, kind: str | None = None, heard: bool | None = None) -> list[str]:
        seen: dict[str, None] = {}
        for c in self.clips:
            if kind is not None and c.kind != kind:
                continue
            if heard is not None and c.heard != heard:
                continue
            seen.setdefault(c.category)
        return list(seen)

    def get(self, category: str, split: str) -> list[Clip]:
        return [c for c in self.clips if c.category == category and c.split == split]

    def label_of(self, category: str) -> int:
        return self.labels[category]


def _split_counts(n: int) -> tuple[int, int, int]:
    total = sum(SPLIT_RATIO)
    va = max(1, round(n * SPLIT_RATIO[1] / total))
    te = max(1, round(n * SPLIT_RATIO[2] / total))
    tr = n - va - te
    if tr < 1:
        raise ConfigurationError(f"{n} clips cannot cover 3 splits")
    return tr, va, te


def build_bank(config: BankConfig) -> SoundBank:
    """Build the procedural bank with disjoint 18:3:4 splits per category."""
    if config.clips_per_category < 3:
        raise ConfigurationError("need at least 3 clips per category for splits")
    clips: list[Clip] = []
    labels: dict[str, int] = {}
    specs: list[tuple[str, str, bool]] = []
    for i in range(config.voice_categories):
        heard = i >= config.unheard_voice_categories
        specs.append(("voice", f"voice{i:02d}", heard))
    for i in range(config.music_categories):
        specs.append(("music", f"music{i:02d}", True))
    for i in range(config.background_categories):
        specs.append(("background", f"background{i:02d}", True))

    tr, va, te = _split_counts(config.clips_per_category)
    splits = ["train"] * tr + ["val"] * va + ["test"] * te
    for cat_idx, (kind, category, heard) in enumerate(specs):
        labels[category] = cat_idx + 1  # positive integer labels
        for j, split in enumerate(splits):
            seed = config.seed * 1_000_003 + cat_idx * 1009 + j
            clip = generate_clip(kind, seed, config.duration_s, category=category,
                                 label=labels[category], split=split)
            clips.append(Clip(id=f"{category}-{j:03d}", category=category,
                              label=labels[category], kind=kind,
                              waveform=clip.waveform, split=split, heard=heard))
    return SoundBank(clips=clips, labels=labels)


def ingest_wav(path, category: str, label: int, kind: str, split: str,
               heard: bool = True) -> Clip:
    """Load a WAV clip, resample to 16 kHz, power-normalize, wrap as a Clip."""
    data, rate = dsp.read_wav(path)
    if data.ndim > 1:
        data = data.mean(axis=1)
    data = dsp.resample_to_16k(data, rate)
    if data.shape[0] < 20 * SAMPLE_RATE:
        raise InvalidInputError(f"{path}: clip shorter than 20 s")
    return Clip(id=Path(path).stem, category=category, label=label, kind=kind,
                waveform=dsp.power_normalize(data), split=split, heard=heard)


def save_bank(bank: SoundBank, root) -> None:
    """Write `bank/<category>/<split>/<id>.wav` plus a JSON manifest."""
    root = Path(root)
    manifest = {"labels": bank.labels, "clips": []}
    for clip in bank.clips:
        d = root / clip.category / clip.split
        d.mkdir(parents=True, exist_ok=True)
        dsp.write_wav(d / f"{clip.id}.wav", clip.waveform)
        manifest["clips"].append({
            "id": clip.id, "category": clip.category, "label": clip.label,
            "kind": clip.kind, "split": clip.split, "heard": clip.heard,
            "path": str(Path(clip.category) / clip.split / f"{clip.id}.wav"),
        })
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_bank(root) -> SoundBank:
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    clips = []
    for rec in manifest["clips"]:
        data, _ = dsp.read_wav(root / rec["path"])
        clips.append(Clip(id=rec["id"], category=rec["category"], label=rec["label"],
                          kind=rec["kind"], waveform=data.astype(np.float32),
                          split=rec["split"], heard=rec["heard"]))
    return SoundBank(clips=clips, labels={k: int(v) for k, v in manifest["labels"].items()})
