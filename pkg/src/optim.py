"""Adaptive-moment (Adam) optimizer with explicit, checkpointable state."""

from collections import OrderedDict

import numpy as np

from .errors import NumericalError, ShapeError


class Adam:
    """Bias-corrected Adam. Hyperparameters default to the diffusion-policy settings."""

    def __init__(self, named_params, lr: float = 1e-4, betas: tuple = (0.9, 0.999), eps: float = 1e-8):
        self.params = OrderedDict(named_params)
        self.lr = np.float32(lr)
        self.beta1 = np.float32(betas[0])
        self.beta2 = np.float32(betas[1])
        self.eps = np.float32(eps)
        self.step_count = 0
        self.m = OrderedDict((n, np.zeros_like(p.data)) for n, p in self.params.items())
        self.v = OrderedDict((n, np.zeros_like(p.data)) for n, p in self.params.items())

    def zero_grad(self):
        for param in self.params.values():
            param.zero_grad()

    def step(self):
        for name, param in self.params.items():
            if param.grad is not None and not np.all(np.isfinite(param.grad)):
                raise NumericalError(f"optimizer: non-finite gradient for parameter '{name}'")

        self.step_count += 1
        t = self.step_count
        correction1 = np.float32(1.0 - float(self.beta1) ** t)
        correction2 = np.float32(1.0 - float(self.beta2) ** t)
        for name, param in self.params.items():
            grad = param.grad if param.grad is not None else np.zeros_like(param.data)
            if grad.shape != param.data.shape:
                raise ShapeError(f"optimizer: gradient {grad.shape} != parameter {param.data.shape} for '{name}'")
            grad = grad.astype(param.data.dtype, copy=False)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * grad
            v *= self.beta2
            v += (1 - self.beta2) * grad * grad
            m_hat = m / correction1
            v_hat = v / correction2
            param.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    # -- persistence --------------------------------------------------------

    def state_arrays(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict()
        for name in self.params:
            out[f"optim.m.{name}"] = self.m[name]
            out[f"optim.v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict, step_count: int):
        for name, param in self.params.items():
            for key, store in ((f"optim.m.{name}", self.m), (f"optim.v.{name}", self.v)):
                value = np.asarray(arrays[key])
                if value.shape != param.data.shape:
                    raise ShapeError(f"optimizer state {key}: {value.shape} != {param.data.shape}")
                store[name] = value.astype(param.data.dtype).copy()
        self.step_count = int(step_count)
