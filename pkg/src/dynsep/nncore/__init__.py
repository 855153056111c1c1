from .layers import (
    PreNormSelfAttention,
    TransformerEncoder,
    conv2d,
    fully_connected,
    gru,
    initialize,
    positional_encoding,
    transpose_conv2d,
)
from .optim import NumericError, adam_state, adam_step, clip_grad_norm
from .gradcheck import GradCheckReport, grad_check
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "PreNormSelfAttention", "TransformerEncoder", "conv2d", "fully_connected",
    "gru", "initialize", "positional_encoding", "transpose_conv2d",
    "NumericError", "adam_state", "adam_step", "clip_grad_norm",
    "GradCheckReport", "grad_check", "load_checkpoint", "save_checkpoint",
]
