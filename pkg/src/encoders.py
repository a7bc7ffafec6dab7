"""
Perception encoders: residual conv image encoder, PointNet-style point
encoder, and the low-dimensional state MLP.

All encoders take a leading batch axis; unbatched inputs are treated as a
batch of one and the batch axis is dropped again on output.
"""

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .config_loader import EncoderConfig
from .errors import ShapeError
from .layers import MLP, Conv2d, LayerNorm, Linear, Module


def _as_batch(x, expected_ndim: int, name: str) -> tuple:
    if not isinstance(x, Tensor):
        x = np.asarray(x)
        x = Tensor(x, dtype=np.float64 if x.dtype == np.float64 else np.float32)
    if x.ndim == expected_ndim - 1:
        return ag.reshape(x, (1,) + x.shape), True
    if x.ndim != expected_ndim:
        raise ShapeError(f"{name}: expected a {expected_ndim - 1}-d input or a batch of them, got {x.shape}")
    return x, False


def _unbatch(out: Tensor, squeeze: bool) -> Tensor:
    return ag.reshape(out, out.shape[1:]) if squeeze else out


class ResidualStage(Module):
    """conv3x3/s2 → Mish → conv3x3 plus a 1x1/s2 projection shortcut."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv1 = Conv2d(in_channels, out_channels, 3, rng, stride=2, padding=1)
        self.conv2 = Conv2d(out_channels, out_channels, 3, rng, stride=1, padding=1)
        self.shortcut = Conv2d(in_channels, out_channels, 1, rng, stride=2, padding=0)

    def __call__(self, x: Tensor) -> Tensor:
        main = self.conv2(ag.mish(self.conv1(x)))
        return ag.mish(main + self.shortcut(x))


class ImageEncoder(Module):
    def __init__(self, resolution: int, channels: tuple, rng: np.random.Generator):
        super().__init__()
        self.resolution = resolution
        self.feature_dim = channels[-1]
        self.calls = 0
        self.stem = Conv2d(3, channels[0], 3, rng, stride=2, padding=1)
        for i in range(1, len(channels)):
            setattr(self, f"stage{i}", ResidualStage(channels[i - 1], channels[i], rng))
        self.stage_count = len(channels) - 1

    def __call__(self, rgb) -> Tensor:
        """rgb: (H, W, 3) or (B, H, W, 3) in [0, 1] → (feature_dim,) or (B, feature_dim)."""
        x, squeeze = _as_batch(rgb, 4, "encode_image")
        if x.shape[1:] != (self.resolution, self.resolution, 3):
            raise ShapeError(f"encode_image: expected {self.resolution}x{self.resolution}x3 frames, got {x.shape[1:]}")
        self.calls += 1
        h = ag.mish(self.stem(x))
        for i in range(1, self.stage_count + 1):
            h = getattr(self, f"stage{i}")(h)
        return _unbatch(ag.mean_reduce(h, axis=(1, 2)), squeeze)


class PointEncoder(Module):
    """Shared per-point MLP with layer norm, max over points, then an affine head."""

    def __init__(self, point_count: int, hidden: tuple, feature_dim: int, rng: np.random.Generator,
                 in_dim: int = 3):
        super().__init__()
        self.point_count = point_count
        self.in_dim = in_dim
        self.feature_dim = feature_dim
        self.calls = 0
        sizes = (in_dim,) + tuple(hidden)
        self.depth = len(hidden)
        for i in range(self.depth):
            setattr(self, f"fc{i}", Linear(sizes[i], sizes[i + 1], rng))
            setattr(self, f"norm{i}", LayerNorm(sizes[i + 1]))
        self.head = Linear(sizes[-1], feature_dim, rng)

    def __call__(self, points) -> Tensor:
        """points: (N, in_dim) or (B, N, in_dim) → (feature_dim,) or (B, feature_dim)."""
        x, squeeze = _as_batch(points, 3, "encode_points")
        if x.shape[1:] != (self.point_count, self.in_dim):
            raise ShapeError(f"encode_points: expected {self.point_count} points of dim {self.in_dim}, "
                             f"got {x.shape[1:]}")
        self.calls += 1
        for i in range(self.depth):
            x = ag.mish(getattr(self, f"norm{i}")(getattr(self, f"fc{i}")(x)))
        return _unbatch(self.head(ag.max_reduce(x, axis=1)), squeeze)


class StateEncoder(Module):
    def __init__(self, state_dim: int, hidden: int, feature_dim: int, rng: np.random.Generator):
        super().__init__()
        self.state_dim = state_dim
        self.feature_dim = feature_dim
        self.calls = 0
        self.mlp = MLP([state_dim, hidden, feature_dim], rng)

    def __call__(self, state) -> Tensor:
        x, squeeze = _as_batch(state, 2, "encode_state")
        if x.shape[1] != self.state_dim:
            raise ShapeError(f"encode_state: expected state of length {self.state_dim}, got {x.shape[1]}")
        self.calls += 1
        return _unbatch(self.mlp(x), squeeze)


def build_encoders(config: EncoderConfig, state_dim: int, rng: np.random.Generator,
                   colored_points: bool = False) -> tuple:
    """(image, point, state) encoders for one policy."""
    image = ImageEncoder(config.image_resolution, config.image_channels, rng)
    point = PointEncoder(config.point_count, config.point_hidden, config.point_feature_dim, rng,
                         in_dim=6 if colored_points else 3)
    state = StateEncoder(state_dim, config.state_hidden, config.state_feature_dim, rng)
    return image, point, state
