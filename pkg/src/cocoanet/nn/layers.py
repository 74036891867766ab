"""Modules: parameter ownership, forward caching and explicit backward passes.

A module's ``forward`` caches whatever its ``backward`` needs; ``backward``
takes the upstream gradient, accumulates parameter gradients into
``Parameter.grad`` and returns the gradient with respect to the input.
Gradients accumulate across calls until :meth:`Module.zero_grad`.
"""
from __future__ import annotations

import logging
import math
from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import as_tensor, get_dtype

logger = logging.getLogger(__name__)


class Parameter:
    """A trainable tensor and its accumulated gradient."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = as_tensor(data)
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Parameter(shape={self.data.shape}, dtype={self.data.dtype})"


class Module:
    """Base class. Attributes holding Parameters, buffers or Modules are registered."""

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "_children", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value) -> None:
        arr = as_tensor(value)
        self._buffers[name] = arr
        object.__setattr__(self, name, arr)

    def _set_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def children(self) -> Iterator["Module"]:
        return iter(self._children.values())

    def named_children(self):
        return iter(self._children.items())

    def modules(self) -> Iterator["Module"]:
        yield self
        for child in self._children.values():
            yield from child.modules()

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        """Parameters followed by buffers (running statistics)."""
        state = OrderedDict((n, p.data) for n, p in self.named_parameters())
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state) -> None:
        params = dict(self.named_parameters())
        owners = {}
        for module_name, module in self._named_modules():
            for bname in module._buffers:
                owners[module_name + bname] = (module, bname)
        expected = set(params) | set(owners)
        missing = expected - set(state)
        unexpected = set(state) - expected
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, value in state.items():
            target = params[name].data if name in params else owners[name][0]._buffers[owners[name][1]]
            if tuple(value.shape) != tuple(target.shape):
                raise ValueError(f"{name}: shape {tuple(value.shape)} != expected {tuple(target.shape)}")
            if name in params:
                params[name].data = np.array(value, dtype=target.dtype)
            else:
                module, bname = owners[name]
                module._set_buffer(bname, np.array(value, dtype=target.dtype))

    def _named_modules(self, prefix: str = ""):
        yield prefix, self
        for cname, child in self._children.items():
            yield from child._named_modules(f"{prefix}{cname}.")

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def gradients(self) -> "OrderedDict[str, np.ndarray]":
        """The gradient tape: name -> gradient, shape-matched to each parameter.

        Parameters that received no gradient report zeros.
        """
        return OrderedDict(
            (n, p.grad if p.grad is not None else np.zeros_like(p.data))
            for n, p in self.named_parameters())

    def set_rng(self, rng: np.random.Generator) -> None:
        """Share one generator among all dropout layers of this module tree."""
        for m in self.modules():
            if isinstance(m, Dropout):
                m.rng = rng

    def clear_cache(self) -> None:
        for m in self.modules():
            object.__setattr__(m, "_cache", None)

    def _need_cache(self):
        cache = getattr(self, "_cache", None)
        if cache is None:
            raise RuntimeError(f"{type(self).__name__}.backward called before forward")
        self._cache = None
        return cache


def kaiming_uniform(shape, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """U(-b, b) with b = sqrt(6 / fan_in), drawn directly in the default dtype."""
    dtype = get_dtype()
    bound = dtype.type(math.sqrt(6.0 / fan_in))
    u = rng.random(shape, dtype=dtype)
    u *= 2 * bound
    u -= bound
    return u


def trunc_normal(shape, std: float, rng: np.random.Generator) -> np.ndarray:
    """Normal(0, std) truncated to two standard deviations."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


def _rng(rng):
    return rng if rng is not None else np.random.default_rng(0)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, stride: int = 1,
                 padding: int = 0, bias: bool = True, rng: np.random.Generator | None = None):
        super().__init__()
        if stride < 1 or padding < 0:
            raise ValueError(f"Conv2d: invalid stride={stride} / padding={padding}")
        self.stride, self.padding = stride, padding
        fan_in = in_channels * kernel_size * kernel_size
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.weight = Parameter(kaiming_uniform(shape, fan_in, _rng(rng)))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None
        self._cache = None

    def forward(self, x):
        b = self.bias.data if self.bias is not None else None
        out = F.conv2d(x, self.weight.data, b, self.stride, self.padding)
        self._cache = x
        return out

    def backward(self, dout):
        x = self._need_cache()
        dx, dw, db = F.conv2d_backward(dout, x, self.weight.data, self.stride, self.padding,
                                       with_bias=self.bias is not None)
        self.weight.accumulate(dw)
        if self.bias is not None:
            self.bias.accumulate(db)
        return dx


class MaxPool2d(Module):
    def __init__(self, window: int, stride: int | None = None, padding: int = 0):
        super().__init__()
        self.window = window
        self.stride = stride if stride is not None else window
        self.padding = padding
        self._cache = None

    def forward(self, x):
        out, arg = F.maxpool2d(x, self.window, self.stride, self.padding)
        self._cache = (arg, x.shape)
        return out

    def backward(self, dout):
        arg, shape = self._need_cache()
        return F.maxpool2d_backward(dout, arg, shape, self.window, self.stride, self.padding)


class ReLU(Module):
    def __init__(self):
        super().__init__()
        self._cache = None

    def forward(self, x):
        out = F.relu(x)
        self._cache = out
        return out

    def backward(self, dout):
        return F.relu_backward(dout, self._need_cache())


class GELU(Module):
    def __init__(self):
        super().__init__()
        self._cache = None

    def forward(self, x):
        self._cache = x
        return F.gelu(x)

    def backward(self, dout):
        return F.gelu_backward(dout, self._need_cache())


class Tanh(Module):
    def __init__(self):
        super().__init__()
        self._cache = None

    def forward(self, x):
        out = np.tanh(x)
        self._cache = out
        return out

    def backward(self, dout):
        return F.tanh_backward(dout, self._need_cache())


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))
        self._cache = None

    def forward(self, x):
        out, cache = F.batchnorm2d(x, self.gamma.data, self.beta.data, self.running_mean,
                                   self.running_var, self.training, self.momentum, self.eps)
        self._cache = cache
        return out

    def backward(self, dout):
        dx, dgamma, dbeta = F.batchnorm2d_backward(dout, self.gamma.data, self._need_cache())
        self.gamma.accumulate(dgamma)
        self.beta.accumulate(dbeta)
        return dx


class Dense(Module):
    def __init__(self, in_features: int, out_features: int, bias: bool = True,
                 rng: np.random.Generator | None = None):
        super().__init__()
        self.weight = Parameter(kaiming_uniform((in_features, out_features), in_features, _rng(rng)))
        self.bias = Parameter(np.zeros(out_features)) if bias else None
        self._cache = None

    def forward(self, x):
        b = self.bias.data if self.bias is not None else None
        out = F.dense(x, self.weight.data, b)
        self._cache = x
        return out

    def backward(self, dout):
        x = self._need_cache()
        dx, dw, db = F.dense_backward(dout, x, self.weight.data, self.bias is not None)
        self.weight.accumulate(dw)
        if self.bias is not None:
            self.bias.accumulate(db)
        return dx


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        super().__init__()
        if dim == 1:
            logger.warning("LayerNorm over a single feature: output is always beta")
        self.eps = eps
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self._cache = None

    def forward(self, x):
        out, cache = F.layernorm(x, self.gamma.data, self.beta.data, self.eps)
        self._cache = cache
        return out

    def backward(self, dout):
        dx, dgamma, dbeta = F.layernorm_backward(dout, self.gamma.data, self._need_cache())
        self.gamma.accumulate(dgamma)
        self.beta.accumulate(dbeta)
        return dx


class Softmax(Module):
    def __init__(self):
        super().__init__()
        self._cache = None

    def forward(self, x):
        out = F.softmax(x)
        self._cache = out
        return out

    def backward(self, dout):
        return F.softmax_backward(dout, self._need_cache())


class Dropout(Module):
    def __init__(self, rate: float, rng: np.random.Generator | None = None):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = _rng(rng)
        self._cache = None

    def forward(self, x):
        out, mask = F.dropout(x, self.rate, self.training, self.rng)
        self._cache = (mask,)
        return out

    def backward(self, dout):
        (mask,) = self._need_cache()
        return dout if mask is None else dout * mask


class Flatten(Module):
    def __init__(self):
        super().__init__()
        self._cache = None

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._need_cache())


class GlobalAvgPool2d(Module):
    def __init__(self):
        super().__init__()
        self._cache = None

    def forward(self, x):
        self._cache = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dout):
        n, c, h, w = self._need_cache()
        return np.broadcast_to((dout / (h * w))[:, :, None, None], (n, c, h, w)).copy()


class Sequential(Module):
    def __init__(self, *layers: Module):
        super().__init__()
        for i, layer in enumerate(layers):
            setattr(self, str(i), layer)

    @classmethod
    def named(cls, layers) -> "Sequential":
        seq = cls()
        for name, layer in layers:
            setattr(seq, name, layer)
        return seq

    def __iter__(self):
        return iter(self._children.values())

    def __len__(self) -> int:
        return len(self._children)

    def __getitem__(self, i):
        return list(self._children.values())[i]

    def forward(self, x):
        for layer in self._children.values():
            x = layer.forward(x)
        return x

    def backward(self, dout):
        for layer in reversed(list(self._children.values())):
            dout = layer.backward(dout)
        return dout
