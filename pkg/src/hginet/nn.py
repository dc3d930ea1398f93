"""Small layer library on top of the tensor engine.

Modules register parameters and submodules through attribute
assignment, in deterministic insertion order, so a model built twice
from the same seed yields bit-identical named parameter stores.
Weights draw from a shared ``np.random.Generator`` threaded through
construction: truncated normal (std 0.02, resampled outside two
deviations) for weights, zeros for biases, ones/zeros for norm scales
and shifts.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor


def trunc_normal(shape, rng: np.random.Generator, std: float = 0.02) -> np.ndarray:
    """Normal draws with |z| > 2 rejected and redrawn, scaled by std."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


class Parameter(Tensor):
    """A leaf tensor that optimizers update; always tracks gradients."""

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


class Module:
    """Base class with named parameter/buffer/submodule traversal."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        """Track a non-gradient array (e.g. running statistics) by name."""
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> Iterator[Parameter]:
        for _, p in self.named_parameters():
            yield p

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, b in self._buffers.items():
            yield prefix + name, b
        for name, child in self._children.items():
            yield from child.named_buffers(prefix + name + ".")

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True) -> "Module":
        object.__setattr__(self, "training", mode)
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters())


class ModuleList(Module):
    """An indexable sequence of submodules."""

    def __init__(self, mods=()):
        super().__init__()
        self._seq: list[Module] = []
        for m in mods:
            self.append(m)

    def append(self, mod: Module) -> None:
        setattr(self, str(len(self._seq)), mod)
        self._seq.append(mod)

    def __iter__(self):
        return iter(self._seq)

    def __len__(self):
        return len(self._seq)

    def __getitem__(self, i):
        return self._seq[i]


class Linear(Module):
    """Affine map on the last axis: y = x @ W (+ b), W of shape [in, out]."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(trunc_normal((in_features, out_features), rng))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ShapeError(f"linear expects last extent {self.in_features}, got {x.shape}")
        y = T.matmul(x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y


class Conv2d(Module):
    """k x k cross-correlation, odd k, zero padding."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int | None = None,
        bias: bool = True,
    ):
        super().__init__()
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        self.weight = Parameter(trunc_normal((out_channels, in_channels, kernel_size, kernel_size), rng))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        squeeze = x.ndim == 3
        if squeeze:
            x = T.reshape(x, (1,) + tuple(x.shape))
        y = T.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)
        if squeeze:
            y = T.reshape(y, tuple(y.shape)[1:])
        return y


class BatchNorm2d(Module):
    """Batch normalization with running statistics (momentum 0.1, eps 1e-5)."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))

    def __call__(self, x: Tensor) -> Tensor:
        squeeze = x.ndim == 3
        if squeeze:
            x = T.reshape(x, (1,) + tuple(x.shape))
        y = T.batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            training=self.training,
            momentum=self.momentum,
            eps=self.eps,
        )
        if squeeze:
            y = T.reshape(y, tuple(y.shape)[1:])
        return y


class LayerNorm(Module):
    """Normalization over the last axis with learned scale and shift."""

    def __init__(self, features: int, eps: float = 1e-6):
        super().__init__()
        self.eps = eps
        self.gamma = Parameter(np.ones(features))
        self.beta = Parameter(np.zeros(features))

    def __call__(self, x: Tensor) -> Tensor:
        mu = T.mean_(x, axis=-1, keepdims=True)
        xc = x - mu
        var = T.mean_(xc * xc, axis=-1, keepdims=True)
        return xc / T.sqrt(var + self.eps) * self.gamma + self.beta


class ConvBNReLU(Module):
    """Conv (no bias) -> batch norm -> relu."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int | None = None,
    ):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, kernel_size, rng, stride=stride, padding=padding, bias=False)
        self.bn = BatchNorm2d(out_channels)

    def __call__(self, x: Tensor) -> Tensor:
        return T.relu(self.bn(self.conv(x)))


class FeedForward(Module):
    """Two-layer token MLP with relu, expansion ratio 2."""

    def __init__(self, features: int, rng: np.random.Generator, ratio: int = 2):
        super().__init__()
        self.fc1 = Linear(features, features * ratio, rng)
        self.fc2 = Linear(features * ratio, features, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.relu(self.fc1(x)))


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, heads: int) -> Tensor:
    """Scaled dot-product attention over the last two axes.

    Accepts [..., n, C] queries against [..., m, C] keys/values with
    identical leading axes.  C must be divisible by ``heads``; the scale
    is 1/sqrt(C/heads).
    """
    c = q.shape[-1]
    if c % heads != 0:
        raise ShapeError(f"channels {c} not divisible by heads {heads}")
    d = c // heads
    lead = tuple(q.shape[:-2])
    n, m = q.shape[-2], k.shape[-2]

    def split(t: Tensor, length: int) -> Tensor:
        t = T.reshape(t, lead + (length, heads, d))
        axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        return T.transpose(t, axes)

    qh, kh, vh = split(q, n), split(k, m), split(v, m)
    scores = T.matmul(qh, T.transpose(kh, tuple(range(len(lead) + 1)) + (len(lead) + 2, len(lead) + 1)))
    attn = T.softmax_rows(scores * (1.0 / np.sqrt(d)))
    out = T.matmul(attn, vh)
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    out = T.transpose(out, axes)
    return T.reshape(out, lead + (n, c))
