"""Two-stage dynamic separator.

Stage one (passive): a mask-predicting U-Net extracts the target
binaural from the mixture, and a second U-Net converts it to an initial
monaural estimate. Stage two: a ring-buffer memory of past initial
estimates feeds a pre-norm transformer that re-decodes the current step
together with up to `refine_horizon` past steps, so every new segment
both benefits from and improves its temporal neighborhood.
"""

from __future__ import annotations

from collections import deque

import numpy as np
import torch
import torch.nn as nn

from . import dsp, nncore
from .dsp import InvalidInputError
from .presets import Preset, get_preset

MIX_CHANNELS = 32   # sliced binaural magnitudes
MONO_CHANNELS = 16  # sliced monaural magnitudes
MEMORY_SIZE = 19
REFINE_HORIZON = 14
MAX_STEPS = 64      # positional-encoding table length


class UNet(nn.Module):
    """5-down/5-up U-Net on 32x32 maps with a final 1x1 projection."""

    def __init__(self, in_ch: int, out_ch: int, channels: tuple[int, ...]):
        super().__init__()
        self.downs = nn.ModuleList()
        prev = in_ch
        for ch in channels:
            self.downs.append(nncore.conv2d(prev, ch))
            prev = ch
        self.ups = nn.ModuleList()
        up_out = list(channels[-2::-1]) + [channels[0]]
        for i, ch in enumerate(up_out):
            in_up = prev if i == 0 else prev * 2
            self.ups.append(nncore.transpose_conv2d(in_up, ch))
            prev = ch
        self.head = nncore.conv2d(channels[0], out_ch, kernel=1, stride=1, padding=0)
        self.act = nn.LeakyReLU(0.2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        skips = []
        for down in self.downs:
            x = self.act(down(x))
            skips.append(x)
        skips.pop()  # bottleneck is not a skip
        for i, up in enumerate(self.ups):
            if i > 0:
                x = torch.cat([x, skips.pop()], dim=1)
            x = torch.relu(up(x))
        return self.head(x)


def _label_channel(label, like: torch.Tensor) -> torch.Tensor:
    lab = torch.as_tensor(label, dtype=like.dtype, device=like.device)
    return lab.view(-1, 1, 1, 1).expand(like.shape[0], 1, *like.shape[2:])


class PassiveSeparator(nn.Module):
    """Mask-based binaural extractor plus binaural-to-monaural converter."""

    def __init__(self, preset: Preset | str = "tiny"):
        super().__init__()
        preset = get_preset(preset) if isinstance(preset, str) else preset
        self.preset = preset
        self.mask_net = UNet(MIX_CHANNELS + 1, MIX_CHANNELS, preset.unet_channels)
        self.mono_net = UNet(MIX_CHANNELS + 1, MONO_CHANNELS, preset.unet_channels)
        # Start the mask near identity (and alive): the ReLU clamp on the
        # mask head is flat at zero, so a collapsed mask cannot recover.
        # The monaural head keeps a zero bias so its output scale can track
        # arbitrarily quiet mixtures.
        nn.init.constant_(self.mask_net.head.bias, 1.0)

    def forward(self, mix_mag: torch.Tensor, label: torch.Tensor):
        """mix_mag: (B, 32, 32, 32) raw magnitudes, channels last.

        Returns (binaural estimate, monaural estimate), both channels-last.
        """
        lab = torch.as_tensor(label, dtype=torch.float32)
        if not torch.all(torch.isfinite(lab) & (lab >= 1)):
            raise InvalidInputError(f"unknown label {label!r}: labels are integers >= 1")
        mix = mix_mag.permute(0, 3, 1, 2)  # to NCHW
        mix_log = torch.log1p(mix)
        mask = torch.relu(self.mask_net(torch.cat([mix_log, _label_channel(label, mix)], 1)))
        binaural = mask * mix
        mono_in = torch.cat([torch.log1p(binaural), _label_channel(label, mix)], 1)
        mono = torch.relu(self.mono_net(mono_in))
        return binaural.permute(0, 2, 3, 1), mono.permute(0, 2, 3, 1)


def passive_loss(b_est: torch.Tensor, b_true: torch.Tensor,
                 m_est: torch.Tensor, m_true: torch.Tensor) -> torch.Tensor:
    """Mean-elementwise L1 on the binaural plus the monaural estimate."""
    if b_est.shape != b_true.shape or m_est.shape != m_true.shape:
        raise InvalidInputError("prediction/target shape mismatch")
    return (b_est - b_true).abs().mean() + (m_est - m_true).abs().mean()


class MemoryBank:
    """Ring buffer of per-step initial monaural estimates (numpy, channels-last)."""

    def __init__(self, capacity: int = MEMORY_SIZE):
        self.capacity = capacity
        self._entries: deque[tuple[int, np.ndarray]] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._entries)

    def append(self, step: int, estimate: np.ndarray) -> None:
        if self._entries and step <= self._entries[-1][0]:
            raise InvalidInputError("memory bank steps must be increasing")
        self._entries.append((step, np.asarray(estimate, dtype=np.float32)))

    def clear(self) -> None:
        self._entries.clear()

    def entries(self) -> list[tuple[int, np.ndarray]]:
        return list(self._entries)


class TransformerMemory(nn.Module):
    """Self-attention refiner over the memory bank plus the current estimate."""

    def __init__(self, preset: Preset | str = "tiny",
                 refine_horizon: int = REFINE_HORIZON):
        super().__init__()
        preset = get_preset(preset) if isinstance(preset, str) else preset
        self.preset = preset
        self.refine_horizon = refine_horizon
        ch = preset.memory_conv_channels
        self.enc1 = nncore.conv2d(MONO_CHANNELS, ch, kernel=2, stride=2, padding=0)
        self.enc2 = nncore.conv2d(ch, ch, kernel=2, stride=2, padding=0)
        self.transformer = nncore.TransformerEncoder(
            preset.memory_dim, preset.memory_heads, preset.memory_hidden,
            preset.memory_layers)
        self.dec1 = nncore.transpose_conv2d(ch, ch, kernel=2, stride=2, padding=0)
        self.dec2 = nncore.transpose_conv2d(ch, MONO_CHANNELS, kernel=2, stride=2, padding=0)
        # zero-init the correction head so an untrained memory is exactly
        # the identity over the initial estimates (see forward)
        nn.init.zeros_(self.dec2.weight)
        nn.init.zeros_(self.dec2.bias)
        pe = nncore.positional_encoding(MAX_STEPS, preset.memory_dim)
        self.register_buffer("pos_enc", pe, persistent=False)

    def forward(self, estimates: torch.Tensor, steps: torch.Tensor) -> torch.Tensor:
        """estimates: (L, 32, 32, 16) channels-last; steps: (L,) step indices.

        Returns refined maps for the trailing min(L-1, refine_horizon)+1
        positions, shape (E'+1, 32, 32, 16), oldest first.
        """
        x = estimates.permute(0, 3, 1, 2)               # (L, 16, 32, 32)
        h1 = torch.relu(self.enc1(x))                   # (L, ch, 16, 16)
        h2 = self.enc2(h1)                              # (L, ch, 8, 8)
        feats = h2.flatten(1) + self.pos_enc[steps]     # (L, d)
        out = self.transformer(feats.unsqueeze(1)).squeeze(1)
        n_out = min(estimates.shape[0] - 1, self.refine_horizon) + 1
        z = out[-n_out:].view(n_out, -1, 8, 8)
        y = torch.relu(self.dec1(z)) + h1[-n_out:]
        # residual refinement: the decoder predicts a correction to the
        # initial estimates, so an untrained memory starts at identity
        delta = self.dec2(y).permute(0, 2, 3, 1)
        return torch.relu(estimates[-n_out:] + delta)


def transformer_loss(refined: torch.Tensor, truths: torch.Tensor) -> torch.Tensor:
    """Mean over refined steps of the mean-elementwise L1 error."""
    if refined.shape != truths.shape:
        raise InvalidInputError("prediction/target shape mismatch")
    return (refined - truths).abs().mean()


class DynamicSeparator:
    """Inference-time composition of the passive stage and the memory stage.

    Tracks the memory bank and the latest refinement of every step of the
    current episode. `no_memory=True` gives the passive-only ablation;
    `refine_horizon=0` gives the current-step-only ablation.
    """

    def __init__(self, passive: PassiveSeparator, memory: TransformerMemory | None,
                 memory_size: int = MEMORY_SIZE):
        self.passive = passive
        self.memory = memory
        self.bank = MemoryBank(memory_size)
        self.latest: dict[int, np.ndarray] = {}   # step -> newest refined estimate
        self.initial: dict[int, np.ndarray] = {}  # step -> initial estimate
        self._binaural: dict[int, np.ndarray] = {}

    def reset(self) -> None:
        self.bank.clear()
        self.latest.clear()
        self.initial.clear()
        self._binaural.clear()

    @torch.no_grad()
    def observe(self, mix_mag: np.ndarray, label: int, step: int):
        """Separate one step; returns (binaural est, refined current monaural)."""
        mix = torch.from_numpy(np.ascontiguousarray(mix_mag, dtype=np.float32))[None]
        b_est, m_est = self.passive(mix, torch.tensor([float(label)]))
        b_np = b_est[0].numpy()
        m_np = m_est[0].numpy()
        self.initial[step] = m_np
        self._binaural[step] = b_np
        if self.memory is None:
            self.latest[step] = m_np
            self.bank.append(step, m_np)
            return b_np, m_np
        entries = self.bank.entries() + [(step, m_np)]
        stack = torch.from_numpy(np.stack([e for _, e in entries]))
        steps = torch.tensor([s for s, _ in entries], dtype=torch.long)
        refined = self.memory(stack, steps).numpy()
        for (s, _), est in zip(entries[-refined.shape[0]:], refined):
            self.latest[s] = est
        self.bank.append(step, m_np)
        return b_np, refined[-1]


def reconstruct_waveform(mono_mag: np.ndarray, mix_phase: np.ndarray) -> np.ndarray:
    """Waveform from a predicted monaural magnitude and the mixture's phase.

    The binaural mixture phase is collapsed to one channel by taking the
    louder ear: the interaural time difference delays the far ear, so the
    near (louder) ear's phase is the one aligned with the source.
    """
    mag = dsp.unslice_reshape(np.asarray(mono_mag))[:, :, 0]
    if mix_phase.ndim == 3:
        energies = np.abs(mix_phase).sum(axis=(0, 1))
        phasor = mix_phase[:, :, int(np.argmax(energies))]
    else:
        phasor = mix_phase
    mod = np.abs(phasor)
    phasor = np.where(mod > 1e-12, phasor / np.maximum(mod, 1e-12), 1.0)
    return dsp.istft(mag * phasor)
