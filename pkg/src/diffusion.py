"""
DDPM action head: noise schedules, closed-form forward noising, the
conditional noise-prediction MLP, its L2 training loss, and ancestral
sampling.

Timesteps are 1-based: t ∈ [1, T], alpha_bars[t - 1] is ᾱ_t.
"""

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor, no_grad
from .config_loader import DiffusionConfig
from .errors import ConfigError, ShapeError
from .layers import MLP, Module

COSINE_OFFSET = 0.008
MAX_BETA = 0.999


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    kind: str
    betas: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) < 1:
            raise ConfigError("noise schedule needs at least one step")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ConfigError("noise schedule betas must lie in (0, 1)")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", 1.0 - betas)
        object.__setattr__(self, "alpha_bars", np.cumprod(1.0 - betas))

    @property
    def steps(self) -> int:
        return len(self.betas)

    def alpha_bar(self, t) -> np.ndarray:
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.steps):
            raise ValueError(f"timestep out of range [1, {self.steps}]: {t}")
        return self.alpha_bars[t - 1]


def build_schedule(steps: int, kind: str = "squared_cosine") -> NoiseSchedule:
    if steps < 1:
        raise ConfigError(f"diffusion steps must be >= 1, got {steps}")
    if kind == "linear":
        betas = np.linspace(1e-4, 0.02, steps)
    elif kind == "squared_cosine":
        x = np.arange(steps + 1) / steps
        f = np.cos((x + COSINE_OFFSET) / (1 + COSINE_OFFSET) * np.pi / 2) ** 2
        alpha_bar = f / f[0]
        betas = np.clip(1.0 - alpha_bar[1:] / alpha_bar[:-1], 1e-12, MAX_BETA)
    else:
        raise ConfigError(f"unknown noise schedule '{kind}'")
    return NoiseSchedule(kind, betas)


def _per_sample(values: np.ndarray, ndim: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return values.reshape(values.shape + (1,) * (ndim - values.ndim))


def q_sample(a0: np.ndarray, t, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """a_t = sqrt(ᾱ_t)·a0 + sqrt(1-ᾱ_t)·eps. `t` is a scalar or one step per leading index."""
    a0 = np.asarray(a0)
    if eps.shape != a0.shape:
        raise ShapeError(f"q_sample: eps {eps.shape} must match a0 {a0.shape}")
    ab = _per_sample(schedule.alpha_bar(t), a0.ndim)
    return (np.sqrt(ab) * a0 + np.sqrt(1.0 - ab) * eps).astype(a0.dtype)


def q_step(a_prev: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """One step of the forward recurrence: sqrt(α_t)·a_{t-1} + sqrt(β_t)·eps."""
    schedule.alpha_bar(t)
    return np.sqrt(schedule.alphas[t - 1]) * a_prev + np.sqrt(schedule.betas[t - 1]) * eps


def timestep_embedding(t, dim: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal embedding, (B,) → (B, dim)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((len(t), 1))], axis=1)
    return emb.astype(dtype)


class NoisePredictor(Module):
    """ε_θ(a_t, t | c): MLP over [flattened a_t ∥ time embedding ∥ c]."""

    def __init__(self, horizon: int, action_dim: int, context_dim: int, config: DiffusionConfig,
                 rng: np.random.Generator):
        super().__init__()
        self.horizon = horizon
        self.action_dim = action_dim
        self.context_dim = context_dim
        self.time_embed_dim = config.time_embed_dim
        flat = horizon * action_dim
        sizes = [flat + config.time_embed_dim + context_dim] + [config.hidden_dim] * config.hidden_layers + [flat]
        self.mlp = MLP(sizes, rng)

    def __call__(self, noisy, t, context: Tensor) -> Tensor:
        noisy = noisy if isinstance(noisy, Tensor) else Tensor(noisy, dtype=context.dtype)
        batch = noisy.shape[0]
        if noisy.shape[1:] != (self.horizon, self.action_dim):
            raise ShapeError(f"denoiser: action chunk {noisy.shape[1:]} != {(self.horizon, self.action_dim)}")
        if context.shape != (batch, self.context_dim):
            raise ShapeError(f"denoiser: context {context.shape} != {(batch, self.context_dim)}")
        emb = Tensor(timestep_embedding(t, self.time_embed_dim, dtype=context.dtype), dtype=context.dtype)
        x = ag.concat([ag.reshape(noisy, (batch, -1)), emb, context], axis=-1)
        return ag.reshape(self.mlp(x), (batch, self.horizon, self.action_dim))


def training_loss(denoiser, a0: np.ndarray, context: Tensor, schedule: NoiseSchedule,
                  rng: np.random.Generator) -> Tensor:
    """Mean squared error between the injected noise and the prediction, t ~ U{1..T} per sample."""
    batch = a0.shape[0]
    t = rng.integers(1, schedule.steps + 1, size=batch)
    eps = rng.standard_normal(a0.shape).astype(a0.dtype)
    noisy = q_sample(a0, t, eps, schedule)
    return ag.mse_loss(denoiser(noisy, t, context), eps)


def denoise_sample(denoiser, context: Tensor, schedule: NoiseSchedule, rng: np.random.Generator,
                   horizon: int, action_dim: int) -> np.ndarray:
    """Ancestral sampling from a_T ~ N(0, I), predicted-x0 clipped to [-1, 1] at every step."""
    batch = context.shape[0]
    shape = (batch, horizon, action_dim)
    x = rng.standard_normal(shape)
    with no_grad():
        for t in range(schedule.steps, 0, -1):
            eps_hat = denoiser(x.astype(context.dtype), np.full(batch, t), context).data.astype(np.float64)
            beta = schedule.betas[t - 1]
            ab = schedule.alpha_bars[t - 1]
            ab_prev = schedule.alpha_bars[t - 2] if t > 1 else 1.0
            x0 = np.clip((x - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab), -1.0, 1.0)
            x0_coef = np.sqrt(ab_prev) * beta / (1.0 - ab)
            xt_coef = np.sqrt(schedule.alphas[t - 1]) * (1.0 - ab_prev) / (1.0 - ab)
            mean = x0_coef * x0 + xt_coef * x
            if t > 1:
                variance = beta * (1.0 - ab_prev) / (1.0 - ab)
                x = mean + np.sqrt(variance) * rng.standard_normal(shape)
            else:
                x = mean
    return np.clip(x, -1.0, 1.0).astype(np.float32)
