"""Time-frequency transforms and audio normalization at a fixed 16 kHz format.

All audio in the workbench lives in one format: 16 kHz float samples,
1 s segments of exactly 16000 samples. Spectrograms are 512 bins x 32
frames per channel (Hann window of 1022 samples zero-padded to an FFT
size of 1023, hop 512), optionally repacked to 32x32x16C by slicing the
frequency axis.
"""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 16000
SEGMENT_SAMPLES = 16000
WIN_LENGTH = 1022
FFT_SIZE = 1023
HOP = 512
N_BINS = 512
N_FRAMES = 32
N_SLICES = 16  # frequency slices of 32 bins each
TARGET_POWER = 1.44


class InvalidInputError(ValueError):
    """Input violates a shape or format precondition."""


class DegenerateInputError(ValueError):
    """Input is silent or otherwise has no defined result."""


def _hann_window() -> np.ndarray:
    # Half-sample-offset periodic Hann: strictly positive at every tap,
    # which keeps the overlap-add inverse well conditioned at the edges.
    n = np.arange(WIN_LENGTH)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * (n + 0.5) / WIN_LENGTH)


_WINDOW = _hann_window()


def _frame_starts() -> np.ndarray:
    return np.arange(N_FRAMES) * HOP


def stft(samples: np.ndarray) -> np.ndarray:
    """STFT of a single-channel 1 s segment. Returns complex (512, 32)."""
    samples = np.asarray(samples)
    if samples.ndim != 1 or samples.shape[0] != SEGMENT_SAMPLES:
        raise InvalidInputError(
            f"expected {SEGMENT_SAMPLES} mono samples, got shape {samples.shape}"
        )
    pad = _frame_starts()[-1] + WIN_LENGTH - SEGMENT_SAMPLES
    padded = np.concatenate([samples.astype(np.float64), np.zeros(pad)])
    frames = np.stack([padded[s : s + WIN_LENGTH] for s in _frame_starts()])
    spec = np.fft.rfft(frames * _WINDOW, n=FFT_SIZE, axis=1)
    return spec.T.copy()  # (bins, frames)


# Overlap-add weight below which a sample counts as edge-ill-conditioned:
# only the near-zero skirt of a single window covers it.
_EDGE_DEN = 1e-2


def istft(spec: np.ndarray) -> np.ndarray:
    """Overlap-add inverse of :func:`stft`. Returns 16000 float samples.

    The least-squares division by the summed squared window is exact for a
    consistent spectrogram (one produced by :func:`stft`) but is ill
    conditioned at the segment edges, where the denominator is ~1e-11:
    spectra modified in the magnitude domain carry tiny frame
    inconsistencies that the division amplifies enormously there. Edge
    samples whose exact inverse escapes the interior's dynamic range are
    therefore replaced by a floored-denominator (attenuated) estimate;
    consistent spectra are untouched and invert exactly.
    """
    spec = np.asarray(spec)
    if spec.shape != (N_BINS, N_FRAMES):
        raise InvalidInputError(f"expected ({N_BINS}, {N_FRAMES}), got {spec.shape}")
    frames = np.fft.irfft(spec.T, n=FFT_SIZE, axis=1)[:, :WIN_LENGTH]
    total = _frame_starts()[-1] + WIN_LENGTH
    num = np.zeros(total)
    den = np.zeros(total)
    for start, frame in zip(_frame_starts(), frames):
        num[start : start + WIN_LENGTH] += _WINDOW * frame
        den[start : start + WIN_LENGTH] += _WINDOW**2
    exact = num / np.maximum(den, 1e-12)
    interior = den >= _EDGE_DEN
    limit = 1.5 * float(np.max(np.abs(exact[interior]))) if interior.any() else 0.0
    safe = num / np.maximum(den, _EDGE_DEN)
    out = np.where(np.abs(exact) <= limit, exact, safe)
    return out[:SEGMENT_SAMPLES].astype(np.float32)


def stft_multi(samples: np.ndarray) -> np.ndarray:
    """STFT per channel. Input (n, C) or (n,), output (512, 32, C)."""
    samples = np.asarray(samples)
    if samples.ndim == 1:
        samples = samples[:, None]
    return np.stack([stft(samples[:, c]) for c in range(samples.shape[1])], axis=-1)


def slice_reshape(mag: np.ndarray) -> np.ndarray:
    """Repack (512, 32, C) magnitudes to (32, 32, 16C).

    Frequency slice i (bins 32i..32i+31) of source channel c lands in
    output channel 16*c + i.
    """
    mag = np.asarray(mag)
    if mag.ndim != 3 or mag.shape[0] != N_BINS or mag.shape[1] != N_FRAMES:
        raise InvalidInputError(f"expected (512, 32, C), got {mag.shape}")
    c = mag.shape[2]
    # (16, 32, 32, C) -> (32 rows, 32 frames, C, 16 slices)
    sliced = mag.reshape(N_SLICES, 32, N_FRAMES, c)
    out = sliced.transpose(1, 2, 3, 0).reshape(32, N_FRAMES, c * N_SLICES)
    return out


def unslice_reshape(packed: np.ndarray) -> np.ndarray:
    """Inverse of :func:`slice_reshape`: (32, 32, 16C) -> (512, 32, C)."""
    packed = np.asarray(packed)
    if packed.ndim != 3 or packed.shape[:2] != (32, N_FRAMES) or packed.shape[2] % N_SLICES:
        raise InvalidInputError(f"expected (32, 32, 16C), got {packed.shape}")
    c = packed.shape[2] // N_SLICES
    sliced = packed.reshape(32, N_FRAMES, c, N_SLICES).transpose(3, 0, 1, 2)
    return sliced.reshape(N_BINS, N_FRAMES, c)


def log_compress(values: np.ndarray) -> np.ndarray:
    """Elementwise log(1 + x) of non-negative magnitudes."""
    values = np.asarray(values)
    if np.any(values < 0):
        raise InvalidInputError("log_compress requires non-negative input")
    return np.log1p(values)


def power_normalize(samples: np.ndarray, target: float = TARGET_POWER) -> np.ndarray:
    """Rescale so the mean squared sample equals `target`."""
    samples = np.asarray(samples, dtype=np.float64)
    power = float(np.mean(samples**2))
    if power <= 0.0:
        raise DegenerateInputError("cannot power-normalize silence")
    return (samples * np.sqrt(target / power)).astype(np.float32)


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a WAV file; returns (float32 samples in [-1, 1] scale, rate)."""
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float32) / 2147483648.0
    else:
        data = data.astype(np.float32)
    return data, int(rate)


def write_wav(path, samples: np.ndarray, rate: int = SAMPLE_RATE, pcm16: bool = False):
    samples = np.asarray(samples, dtype=np.float32)
    if pcm16:
        peak = max(1.0, float(np.max(np.abs(samples))) if samples.size else 1.0)
        wavfile.write(path, rate, (samples / peak * 32767).astype(np.int16))
    else:
        wavfile.write(path, rate, samples)


def resample_to_16k(samples: np.ndarray, rate: int) -> np.ndarray:
    """Polyphase resampling of ingested audio to the house rate."""
    if rate == SAMPLE_RATE:
        return np.asarray(samples, dtype=np.float32)
    from scipy.signal import resample_poly
    from math import gcd

    g = gcd(SAMPLE_RATE, rate)
    return resample_poly(samples, SAMPLE_RATE // g, rate // g).astype(np.float32)
