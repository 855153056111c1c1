"""Separation-quality metrics: SI-SDR and spectrogram distance."""

from __future__ import annotations

import numpy as np

from .dsp import DegenerateInputError, InvalidInputError

SI_SDR_CLAMP = 60.0


def si_sdr(est: np.ndarray, ref: np.ndarray, clamp: float = SI_SDR_CLAMP) -> float:
    """Scale-invariant source-to-distortion ratio in dB, clamped to +/-clamp.

    Projects the estimate onto the reference (alpha = <est, ref> / ||ref||^2)
    and reports 10 log10(||alpha ref||^2 / ||alpha ref - est||^2).
    """
    est = np.asarray(est, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    if est.shape != ref.shape:
        raise InvalidInputError(f"length mismatch: {est.shape} vs {ref.shape}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy <= 0.0:
        raise DegenerateInputError("silent reference")
    alpha = float(np.dot(est, ref)) / ref_energy
    target = alpha * ref
    signal = float(np.dot(target, target))
    noise = float(np.sum((target - est) ** 2))
    if signal <= 0.0:
        return -clamp
    if noise <= 0.0:
        return clamp
    return float(np.clip(10.0 * np.log10(signal / noise), -clamp, clamp))


def stft_distance(est: np.ndarray, ref: np.ndarray) -> float:
    """Euclidean (elementwise L2) distance between magnitude spectrograms."""
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if est.shape != ref.shape:
        raise InvalidInputError(f"shape mismatch: {est.shape} vs {ref.shape}")
    return float(np.sqrt(np.sum((est - ref) ** 2)))
