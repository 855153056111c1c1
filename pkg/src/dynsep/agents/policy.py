"""Observation encoders and the recurrent actor-critic."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .. import nncore
from ..presets import Preset, get_preset

N_ACTIONS = 3  # MoveForward, TurnLeft, TurnRight


class LifecycleError(RuntimeError):
    pass


def _conv_stack(in_ch: int, kernels, strides, channels):
    layers = []
    prev = in_ch
    for k, s, c in zip(kernels, strides, channels):
        layers += [nncore.conv2d(prev, c, kernel=k, stride=s, padding=0), nn.ReLU()]
        prev = c
    return nn.Sequential(*layers)


class ObservationEncoders(nn.Module):
    """Three CNN encoders: visual raster, binaural estimate, monaural estimate.

    The binaural input is log-compressed; the monaural encoder consumes
    raw magnitudes. Outputs are concatenated into one feature vector.
    """

    def __init__(self, preset: Preset | str = "tiny"):
        super().__init__()
        preset = get_preset(preset) if isinstance(preset, str) else preset
        self.preset = preset
        fc = preset.encoder_fc
        # 16x16 raster: reduced kernels; 32x32 audio maps: [8,4,2]/[4,2,1]
        self.visual_conv = _conv_stack(1, (4, 3, 2), (2, 2, 1), (32, 64, 32))
        self.visual_fc = nn.Sequential(nncore.fully_connected(32 * 2 * 2, fc), nn.ReLU())
        self.binaural_conv = _conv_stack(32, (8, 4, 2), (4, 2, 1), (32, 64, 32))
        self.binaural_fc = nn.Sequential(nncore.fully_connected(32, fc), nn.ReLU())
        self.monaural_conv = _conv_stack(16, (8, 4, 2), (4, 2, 1), (32, 64, 32))
        self.monaural_fc = nn.Sequential(nncore.fully_connected(32, fc), nn.ReLU())
        self.out_dim = 3 * fc

    def forward(self, visual: torch.Tensor, binaural: torch.Tensor,
                monaural: torch.Tensor) -> torch.Tensor:
        """visual (B,16,16); binaural (B,32,32,32) raw; monaural (B,32,32,16) raw."""
        v = self.visual_fc(self.visual_conv(visual[:, None]).flatten(1))
        b = self.binaural_fc(self.binaural_conv(
            torch.log1p(binaural).permute(0, 3, 1, 2)).flatten(1))
        m = self.monaural_fc(self.monaural_conv(monaural.permute(0, 3, 1, 2)).flatten(1))
        return torch.cat([v, b, m], dim=1)


class PolicyNet(nn.Module):
    """GRU core with categorical actor and scalar critic heads."""

    def __init__(self, preset: Preset | str = "tiny"):
        super().__init__()
        preset = get_preset(preset) if isinstance(preset, str) else preset
        self.preset = preset
        self.encoders = ObservationEncoders(preset)
        self.gru = nncore.gru(self.encoders.out_dim, preset.gru_hidden)
        self.actor = nncore.fully_connected(preset.gru_hidden, N_ACTIONS)
        self.critic = nncore.fully_connected(preset.gru_hidden, 1)

    def initial_hidden(self, batch: int = 1) -> torch.Tensor:
        return torch.zeros(1, batch, self.preset.gru_hidden)

    def forward(self, visual, binaural, monaural, hidden):
        """Single step: inputs (B, ...), hidden (1, B, H).

        Returns (logits, value, new_hidden).
        """
        o = self.encoders(visual, binaural, monaural)
        s, h = self.gru(o[None], hidden)
        s = s[0]
        return self.actor(s), self.critic(s)[:, 0], h

    def sequence(self, visual, binaural, monaural, hidden):
        """Full-rollout replay: inputs (T, B, ...). Returns (logits, values)."""
        t, b = visual.shape[:2]
        o = self.encoders(visual.flatten(0, 1), binaural.flatten(0, 1),
                          monaural.flatten(0, 1)).view(t, b, -1)
        s, _ = self.gru(o, hidden)
        return self.actor(s), self.critic(s)[..., 0]


def act(policy: PolicyNet, obs_tensors, hidden, mode: str = "sample",
        generator: torch.Generator | None = None):
    """One acting step. Returns (action index, log-prob, value, new hidden)."""
    if policy is None:
        raise LifecycleError("policy not initialized")
    visual, binaural, monaural = obs_tensors
    with torch.no_grad():
        logits, value, h = policy(visual[None], binaural[None], monaural[None], hidden)
        logp = torch.log_softmax(logits[0], dim=-1)
        if mode == "greedy":
            action = int(torch.argmax(logp))
        else:
            probs = torch.exp(logp)
            action = int(torch.multinomial(probs, 1, generator=generator))
    return action, float(logp[action]), float(value[0]), h


def obs_to_tensors(visual: np.ndarray, binaural: np.ndarray, monaural: np.ndarray):
    return (torch.from_numpy(np.ascontiguousarray(visual, dtype=np.float32)),
            torch.from_numpy(np.ascontiguousarray(binaural, dtype=np.float32)),
            torch.from_numpy(np.ascontiguousarray(monaural, dtype=np.float32)))
