"""
Parametrized building blocks on top of the autograd ops.

Modules register parameters and sub-modules in attribute order, so
named_parameters() is stable and checkpoints list parameters in a
declared order. Initialization draws from an explicit numpy Generator.
"""

from collections import OrderedDict

import numpy as np

from . import autograd as ag
from .autograd import Tensor


def _uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, param in self._params.items():
            yield prefix + name, param
        for name, module in self._modules.items():
            yield from module.named_parameters(prefix + name + ".")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for module in self._modules.values():
            yield from module.modules()

    def train(self, mode: bool = True):
        for module in self.modules():
            object.__setattr__(module, "training", mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for param in self.parameters():
            param.zero_grad()

    def astype(self, dtype):
        """Cast every parameter in place (float64 copies for gradient checks)."""
        for param in self.parameters():
            param.data = param.data.astype(dtype)
            param.grad = None
        return self

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.data) for name, p in self.named_parameters())

    def load_state_dict(self, state: dict):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state dict mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, param in own.items():
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise ValueError(f"{name}: checkpoint shape {value.shape} != model shape {param.shape}")
            param.data = value.astype(param.data.dtype).copy()

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Tensor(_uniform(rng, (in_features, out_features), in_features), requires_grad=True)
        self.bias = Tensor(_uniform(rng, (out_features,), in_features), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ag.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1, padding: int = 0):
        super().__init__()
        fan_in = in_channels * kernel_size * kernel_size
        self.stride = stride
        self.padding = padding
        self.weight = Tensor(
            _uniform(rng, (kernel_size, kernel_size, in_channels, out_channels), fan_in),
            requires_grad=True,
        )
        self.bias = Tensor(_uniform(rng, (out_channels,), fan_in), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ag.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class LayerNorm(Module):
    def __init__(self, dim: int):
        super().__init__()
        self.gamma = Tensor(np.ones(dim, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(dim, dtype=np.float32), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ag.layer_norm(x, self.gamma, self.beta)


class MLP(Module):
    """Stack of Linear layers with Mish between them (none after the last)."""

    def __init__(self, sizes: list, rng: np.random.Generator, layer_norm: bool = False):
        super().__init__()
        self.depth = len(sizes) - 1
        for i in range(self.depth):
            setattr(self, f"fc{i}", Linear(sizes[i], sizes[i + 1], rng))
            if layer_norm and i < self.depth - 1:
                setattr(self, f"norm{i}", LayerNorm(sizes[i + 1]))
        self.use_norm = layer_norm

    def __call__(self, x: Tensor) -> Tensor:
        for i in range(self.depth):
            x = getattr(self, f"fc{i}")(x)
            if i < self.depth - 1:
                if self.use_norm:
                    x = getattr(self, f"norm{i}")(x)
                x = ag.mish(x)
        return x
