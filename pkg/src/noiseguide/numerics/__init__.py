from . import tensor
from .gradcheck import max_relative_error, numerical_gradient
from .layers import as_channels, causal_dilated_conv, gated_activation, receptive_field, weight_norm
from .module import Module
from .optim import Adam, AdamState, adam_step, clip_grad_norm
from .rng import make_rng, spawn
from .tensor import Param, Tape, Tensor

__all__ = [
    "Adam",
    "AdamState",
    "Module",
    "Param",
    "Tape",
    "Tensor",
    "adam_step",
    "as_channels",
    "causal_dilated_conv",
    "clip_grad_norm",
    "gated_activation",
    "make_rng",
    "max_relative_error",
    "numerical_gradient",
    "receptive_field",
    "spawn",
    "tensor",
    "weight_norm",
]
