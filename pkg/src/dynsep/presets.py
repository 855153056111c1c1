"""Architecture presets.

`paper` carries the full-size layer widths; `tiny` is the desk-scale
configuration used by the test and acceptance suites.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .bank import ConfigurationError


@dataclass(frozen=True)
class Preset:
    name: str
    unet_channels: tuple[int, ...]
    memory_dim: int            # transformer model width (flattened 8x8 conv features)
    memory_layers: int
    memory_heads: int
    memory_hidden: int
    memory_conv_channels: int  # 8*8*channels == memory_dim
    gru_hidden: int
    encoder_fc: int


PRESETS = {
    "tiny": Preset(
        name="tiny",
        unet_channels=(16, 32, 64, 128, 128),
        memory_dim=256, memory_layers=1, memory_heads=4, memory_hidden=256,
        memory_conv_channels=4,
        gru_hidden=128, encoder_fc=128,
    ),
    "paper": Preset(
        name="paper",
        unet_channels=(64, 128, 256, 512, 512),
        memory_dim=1024, memory_layers=2, memory_heads=8, memory_hidden=1024,
        memory_conv_channels=16,
        gru_hidden=512, encoder_fc=512,
    ),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}") from None
