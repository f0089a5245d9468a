"""Minimal tensor engine: layer ops with backward passes, Adam, gradient checks."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .init import he_init
from .layers import Conv2d, Linear, Module
from .ops import (
    activation,
    add,
    concat,
    conv2d,
    crop,
    grid_sample,
    leaky_relu,
    linear,
    mean_abs_diff,
    mul,
    reflect_pad,
    resize_bilinear,
    set_max,
    sigmoid,
)
from .optim import AdamState, adam_step
from .tensor import Parameter, Tensor

__all__ = [
    "AdamState",
    "Conv2d",
    "Linear",
    "Module",
    "Parameter",
    "Tensor",
    "activation",
    "adam_step",
    "add",
    "concat",
    "conv2d",
    "crop",
    "grad_check",
    "grid_sample",
    "he_init",
    "leaky_relu",
    "linear",
    "load_checkpoint",
    "mean_abs_diff",
    "mul",
    "reflect_pad",
    "resize_bilinear",
    "save_checkpoint",
    "set_max",
    "sigmoid",
]
