"""Layer vocabulary and initializers.

Every network in the workbench is assembled from this fixed set of
layer kinds (conv2d, transpose conv2d, fully-connected, GRU, pre-norm
multi-head self-attention, layer norm, activations), built as torch
modules with the initialization scheme wired in at construction.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from ..bank import ConfigurationError

INIT_SCHEMES = ("he-normal", "semi-orthogonal", "xavier-uniform")


def initialize(tensor: torch.Tensor, scheme: str, generator: torch.Generator | None = None):
    """In-place weight init: he-normal, semi-orthogonal, or xavier-uniform."""
    if scheme == "he-normal":
        fan_in = tensor.shape[1] * (tensor[0][0].numel() if tensor.dim() > 2 else 1)
        std = math.sqrt(2.0 / fan_in)
        with torch.no_grad():
            tensor.normal_(0.0, std, generator=generator)
    elif scheme == "semi-orthogonal":
        rows, cols = tensor.shape[0], tensor[0].numel()
        with torch.no_grad():
            flat = torch.empty(rows, cols, dtype=torch.float64)
            flat.normal_(0.0, 1.0, generator=generator)
            q, r = torch.linalg.qr(flat.T if rows < cols else flat)
            q = q * torch.sign(torch.diagonal(r))
            q = q.T if rows < cols else q
            tensor.copy_(q.reshape_as(tensor).to(tensor.dtype))
    elif scheme == "xavier-uniform":
        fan_in = tensor.shape[1] * (tensor[0][0].numel() if tensor.dim() > 2 else 1)
        fan_out = tensor.shape[0] * (tensor[0][0].numel() if tensor.dim() > 2 else 1)
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        with torch.no_grad():
            tensor.uniform_(-bound, bound, generator=generator)
    else:
        raise ConfigurationError(f"unknown init scheme {scheme!r}")
    return tensor


def _init_module(module: nn.Module, scheme: str):
    for name, p in module.named_parameters():
        if "weight" in name and p.dim() >= 2:
            initialize(p, scheme)
        elif p.dim() <= 1:
            nn.init.zeros_(p)


def conv2d(in_ch: int, out_ch: int, kernel: int = 4, stride: int = 2, padding: int = 1,
           scheme: str = "he-normal") -> nn.Conv2d:
    layer = nn.Conv2d(in_ch, out_ch, kernel, stride, padding)
    _init_module(layer, scheme)
    return layer


def transpose_conv2d(in_ch: int, out_ch: int, kernel: int = 4, stride: int = 2,
                     padding: int = 1, scheme: str = "he-normal") -> nn.ConvTranspose2d:
    layer = nn.ConvTranspose2d(in_ch, out_ch, kernel, stride, padding)
    _init_module(layer, scheme)
    return layer


def fully_connected(in_dim: int, out_dim: int, scheme: str = "he-normal") -> nn.Linear:
    layer = nn.Linear(in_dim, out_dim)
    _init_module(layer, scheme)
    return layer


def gru(input_dim: int, hidden_dim: int) -> nn.GRU:
    """One-layer unidirectional GRU with semi-orthogonal recurrent weights."""
    layer = nn.GRU(input_dim, hidden_dim, batch_first=False)
    for name, p in layer.named_parameters():
        if "weight_hh" in name:
            for k in range(3):  # per-gate blocks
                initialize(p.data[k * hidden_dim : (k + 1) * hidden_dim], "semi-orthogonal")
        elif "weight_ih" in name:
            initialize(p, "he-normal")
        else:
            nn.init.zeros_(p)
    return layer


class PreNormSelfAttention(nn.Module):
    """Pre-norm transformer encoder block: LN -> MHSA -> +skip, LN -> FF -> +skip."""

    def __init__(self, dim: int, heads: int, hidden: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=False)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(
            fully_connected(dim, hidden, "xavier-uniform"),
            nn.ReLU(),
            fully_connected(hidden, dim, "xavier-uniform"),
        )
        _init_module(self.attn, "xavier-uniform")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        attn_out, _ = self.attn(h, h, h, need_weights=False)
        x = x + attn_out
        x = x + self.ff(self.norm2(x))
        return x


class TransformerEncoder(nn.Module):
    def __init__(self, dim: int, heads: int, hidden: int, layers: int):
        super().__init__()
        self.blocks = nn.ModuleList(
            PreNormSelfAttention(dim, heads, hidden) for _ in range(layers)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        return x


def positional_encoding(length: int, dim: int, device=None) -> torch.Tensor:
    """Standard sinusoidal positional encodings, shape (length, dim)."""
    if dim % 2:
        raise ConfigurationError("positional encoding dim must be even")
    pos = torch.arange(length, dtype=torch.float32, device=device)[:, None]
    i = torch.arange(dim // 2, dtype=torch.float32, device=device)[None, :]
    angle = pos / torch.pow(10000.0, 2 * i / dim)
    enc = torch.zeros(length, dim, device=device)
    enc[:, 0::2] = torch.sin(angle)
    enc[:, 1::2] = torch.cos(angle)
    return enc
