"""
Complementarity-aware fusion of the RGB and point-cloud features.

Pipeline (cross_attention mode): modality dropout → per-branch projection
into shared_dim, reshaped into token_count tokens → bidirectional
cross-attention with residuals → token grids flattened back to shared_dim →
[rgb ∥ pc ∥ state] → element-wise dropout. The state branch is never
dropped and never attends.

Every stochastic decision draws from the rng handed in by the caller.
"""

from enum import IntEnum

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .config_loader import FusionConfig
from .errors import ConfigError, ShapeError
from .layers import Linear, Module


class DropMask(IntEnum):
    KEEP_BOTH = 0
    DROP_RGB = 1
    DROP_PC = 2


def draw_drop_masks(batch: int, p: float, training: bool, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per sample: DROP_RGB w.p. p, DROP_PC w.p. p, else KEEP_BOTH."""
    if not 0.0 <= p <= 0.5:
        raise ConfigError(f"modality dropout probability must lie in [0, 0.5], got {p}")
    if not training:
        return np.full(batch, DropMask.KEEP_BOTH, dtype=np.int64)
    u = rng.random(batch)
    return np.where(u < p, DropMask.DROP_RGB, np.where(u < 2 * p, DropMask.DROP_PC, DropMask.KEEP_BOTH))


def _keep_column(masks: np.ndarray, dropped: DropMask, like: Tensor) -> np.ndarray:
    return (masks != dropped).astype(like.dtype)[:, None]


def modality_dropout(rgb_feat: Tensor, pc_feat: Tensor, p: float, training: bool,
                     rng: np.random.Generator) -> tuple:
    """Zero out (no rescaling) the dropped branch per sample. Returns (rgb', pc', masks)."""
    if rgb_feat.ndim != 2 or pc_feat.ndim != 2 or rgb_feat.shape[0] != pc_feat.shape[0]:
        raise ShapeError(f"modality_dropout: expected batched features, got {rgb_feat.shape} and {pc_feat.shape}")
    masks = draw_drop_masks(rgb_feat.shape[0], p, training, rng)
    rgb_out = rgb_feat * _keep_column(masks, DropMask.DROP_RGB, rgb_feat)
    pc_out = pc_feat * _keep_column(masks, DropMask.DROP_PC, pc_feat)
    return rgb_out, pc_out, masks


def element_dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p). Identity outside training."""
    if not training or p == 0.0:
        return x
    if p >= 1.0:
        return x * np.zeros(x.shape, dtype=x.dtype)
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return x * keep


class CrossAttention(Module):
    """Multi-head attention of query tokens over context tokens; bias-free projections."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, dropout: float = 0.0):
        super().__init__()
        if dim % heads:
            raise ConfigError(f"attention dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.dropout = dropout
        self.query = Linear(dim, dim, rng, bias=False)
        self.key = Linear(dim, dim, rng, bias=False)
        self.value = Linear(dim, dim, rng, bias=False)
        self.out = Linear(dim, dim, rng, bias=False)

    def _split_heads(self, x: Tensor) -> Tensor:
        b, n, _ = x.shape
        return ag.transpose(ag.reshape(x, (b, n, self.heads, self.dim // self.heads)), (0, 2, 1, 3))

    def __call__(self, tokens: Tensor, context: Tensor, training: bool = False, rng=None) -> tuple:
        q = self._split_heads(self.query(tokens))
        k = self._split_heads(self.key(context))
        v = self._split_heads(self.value(context))
        if training and self.dropout > 0.0:
            scores = ag.matmul(q, ag.swap_last(k)) * (1.0 / np.sqrt(q.shape[-1]))
            weights = ag.softmax(scores, axis=-1)
            attended = ag.matmul(element_dropout(weights, self.dropout, True, rng), v)
        else:
            attended, weights = ag.scaled_dot_product_attention(q, k, v)
        b, _, n, _ = attended.shape
        merged = ag.reshape(ag.transpose(attended, (0, 2, 1, 3)), (b, n, self.dim))
        return self.out(merged), weights


class BidirectionalCrossAttention(Module):
    """RGB tokens attend to PC tokens and vice versa, each with an optional residual."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, dropout: float = 0.0,
                 use_residual: bool = True):
        super().__init__()
        self.use_residual = use_residual
        self.rgb_to_pc = CrossAttention(dim, heads, rng, dropout)
        self.pc_to_rgb = CrossAttention(dim, heads, rng, dropout)
        self.last_weights = None

    def __call__(self, rgb_tokens: Tensor, pc_tokens: Tensor, training: bool = False, rng=None) -> tuple:
        if rgb_tokens.shape != pc_tokens.shape:
            raise ShapeError(f"cross attention: token grids differ, {rgb_tokens.shape} vs {pc_tokens.shape}")
        rgb_att, rgb_weights = self.rgb_to_pc(rgb_tokens, pc_tokens, training, rng)
        pc_att, pc_weights = self.pc_to_rgb(pc_tokens, rgb_tokens, training, rng)
        self.last_weights = (rgb_weights.data, pc_weights.data)
        if self.use_residual:
            return rgb_tokens + rgb_att, pc_tokens + pc_att
        return rgb_att, pc_att


class FusionModule(Module):
    def __init__(self, config: FusionConfig, image_dim: int, point_dim: int, state_dim: int,
                 rng: np.random.Generator):
        super().__init__()
        self.config = config
        self.image_dim = image_dim
        self.point_dim = point_dim
        self.state_dim = state_dim
        mode = config.fusion_mode
        if mode not in ("cross_attention", "concat", "early_fusion"):
            raise ConfigError(f"unknown fusion mode '{mode}'")
        if mode != "early_fusion":
            self.rgb_proj = Linear(image_dim, config.shared_dim, rng)
        self.pc_proj = Linear(point_dim, config.shared_dim, rng)
        if mode == "cross_attention":
            self.attention = BidirectionalCrossAttention(
                config.token_dim, config.head_count, rng,
                dropout=config.attention_drop_p, use_residual=config.use_residual,
            )
        self.last_masks = None

    @property
    def context_dim(self) -> int:
        branches = 1 if self.config.fusion_mode == "early_fusion" else 2
        return branches * self.config.shared_dim + self.state_dim

    def project_and_tokenize(self, feat: Tensor, projection: Linear) -> Tensor:
        """(B, in_dim) → (B, token_count, shared_dim / token_count)."""
        if feat.shape[-1] != projection.in_features:
            raise ShapeError(f"project_and_tokenize: feature dim {feat.shape[-1]} != {projection.in_features}")
        shared = projection(feat)
        return ag.reshape(shared, (feat.shape[0], self.config.token_count, self.config.token_dim))

    def pre_dropout(self, rgb_feat, pc_feat, state_feat: Tensor, training: bool = False,
                    rng: np.random.Generator = None) -> Tensor:
        """[rgb ∥ pc ∥ state] (or [pc ∥ state] for early fusion) before element-wise dropout."""
        cfg = self.config
        if state_feat.shape[-1] != self.state_dim:
            raise ShapeError(f"fuse: state feature dim {state_feat.shape[-1]} != {self.state_dim}")
        if cfg.fusion_mode == "early_fusion":
            return ag.concat([self.pc_proj(pc_feat), state_feat], axis=-1)

        if cfg.use_modality_dropout:
            rgb_feat, pc_feat, self.last_masks = modality_dropout(
                rgb_feat, pc_feat, cfg.modality_drop_p, training, rng)
        else:
            self.last_masks = np.full(rgb_feat.shape[0], DropMask.KEEP_BOTH, dtype=np.int64)

        if cfg.fusion_mode == "concat":
            return ag.concat([self.rgb_proj(rgb_feat), self.pc_proj(pc_feat), state_feat], axis=-1)

        rgb_tokens = self.project_and_tokenize(rgb_feat, self.rgb_proj)
        pc_tokens = self.project_and_tokenize(pc_feat, self.pc_proj)
        rgb_tokens, pc_tokens = self.attention(rgb_tokens, pc_tokens, training, rng)
        batch = rgb_tokens.shape[0]
        return ag.concat([
            ag.reshape(rgb_tokens, (batch, cfg.shared_dim)),
            ag.reshape(pc_tokens, (batch, cfg.shared_dim)),
            state_feat,
        ], axis=-1)

    def __call__(self, rgb_feat, pc_feat, state_feat: Tensor, training: bool = False,
                 rng: np.random.Generator = None) -> Tensor:
        """The conditioning context c, shape (B, context_dim)."""
        joined = self.pre_dropout(rgb_feat, pc_feat, state_feat, training, rng)
        return element_dropout(joined, self.config.element_drop_p, training, rng)
