"""Parameters and the three layer types the models are built from."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, bias_add, conv2d, conv_transpose2d, layer_norm, matmul


class Parameter(Tensor):
    """Named leaf tensor carrying accumulated gradient and optimizer state."""

    __slots__ = ("name", "m", "v", "vel")

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.m = np.zeros_like(self.data)  # Adam first moment
        self.v = np.zeros_like(self.data)  # Adam second moment
        self.vel = np.zeros_like(self.data)  # SGD momentum velocity


def _uniform(rng, bound, shape):
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str):
        bound = 1.0 / np.sqrt(n_in)
        self.w = Parameter(_uniform(rng, bound, (n_in, n_out)), f"{name}.w")
        self.b = Parameter(np.zeros(n_out), f"{name}.b")

    def __call__(self, x):
        return bias_add(matmul(x, self.w), self.b)

    @property
    def params(self):
        return [self.w, self.b]


class Conv2d:
    def __init__(self, c_in, c_out, kernel, stride, padding, rng, name):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        bound = 1.0 / np.sqrt(c_in * kh * kw)
        self.w = Parameter(_uniform(rng, bound, (c_out, c_in, kh, kw)), f"{name}.w")
        self.b = Parameter(np.zeros(c_out), f"{name}.b")
        self.stride = stride
        self.padding = padding

    def __call__(self, x):
        return conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)

    @property
    def params(self):
        return [self.w, self.b]


class LayerNorm:
    """Per-sample normalization with learnable per-channel scale and shift."""

    def __init__(self, width, name):
        self.gamma = Parameter(np.ones(width), f"{name}.gamma")
        self.beta = Parameter(np.zeros(width), f"{name}.beta")

    def __call__(self, x):
        return layer_norm(x, self.gamma, self.beta)

    @property
    def params(self):
        return [self.gamma, self.beta]


class ConvTranspose2d:
    def __init__(self, c_in, c_out, kernel, stride, padding, rng, name, output_padding=0):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        bound = 1.0 / np.sqrt(c_in * kh * kw)
        self.w = Parameter(_uniform(rng, bound, (c_in, c_out, kh, kw)), f"{name}.w")
        self.b = Parameter(np.zeros(c_out), f"{name}.b")
        self.stride = stride
        self.padding = padding
        self.output_padding = output_padding

    def __call__(self, x):
        return conv_transpose2d(
            x,
            self.w,
            self.b,
            stride=self.stride,
            padding=self.padding,
            output_padding=self.output_padding,
        )

    @property
    def params(self):
        return [self.w, self.b]
