"""Minimal reverse-mode autodiff: float64 tensors, tape, layers, optimizers."""

from .nn import Conv2d, ConvTranspose2d, LayerNorm, Linear, Parameter
from .optim import adam_step, sgd_step, zero_grad
from .serialize import ContainerFormatError, read_container, write_container
from .tensor import (
    AutodiffError,
    NonFiniteError,
    ShapeMismatchError,
    Tape,
    TapeError,
    Tensor,
    absval,
    active_tape,
    add,
    as_tensor,
    backward,
    bias_add,
    clamp_min,
    concat,
    constant,
    conv2d,
    conv_transpose2d,
    exp,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    narrow,
    neg,
    no_grad,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    sub,
    sum_,
    tanh,
)

__all__ = [
    "AutodiffError",
    "ContainerFormatError",
    "Conv2d",
    "ConvTranspose2d",
    "LayerNorm",
    "Linear",
    "NonFiniteError",
    "Parameter",
    "ShapeMismatchError",
    "Tape",
    "TapeError",
    "Tensor",
    "absval",
    "active_tape",
    "adam_step",
    "add",
    "as_tensor",
    "backward",
    "bias_add",
    "clamp_min",
    "concat",
    "constant",
    "conv2d",
    "conv_transpose2d",
    "exp",
    "layer_norm",
    "log",
    "log_softmax",
    "matmul",
    "mean",
    "mul",
    "narrow",
    "neg",
    "no_grad",
    "read_container",
    "relu",
    "reshape",
    "scale",
    "sgd_step",
    "sigmoid",
    "softmax",
    "sub",
    "sum_",
    "tanh",
    "write_container",
    "zero_grad",
]
