"""
Diffusion policy assembly: encoders + fusion (or a unimodal shortcut) +
noise predictor, wired according to an ablation variant.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor, no_grad
from .config_loader import Settings, TaskSpec, with_fusion
from .diffusion import NoisePredictor, build_schedule, denoise_sample, training_loss
from .encoders import ImageEncoder, PointEncoder, StateEncoder
from .errors import ConfigError
from .fusion import FusionModule
from .layers import Module

FAULTS = ("none", "rgb_missing", "pc_missing")


@dataclass(frozen=True)
class AblationVariant:
    name: str
    fusion_changes: dict = field(default_factory=dict, hash=False)
    modalities: tuple = ("rgb", "pc")

    @property
    def fused(self) -> bool:
        return len(self.modalities) == 2


VARIANTS = {
    "vgdp": AblationVariant("vgdp"),
    "no_residual": AblationVariant("no_residual", {"use_residual": False}),
    "no_dropout": AblationVariant("no_dropout", {"use_modality_dropout": False}),
    "concat": AblationVariant("concat", {"fusion_mode": "concat"}),
    "early_fusion": AblationVariant("early_fusion", {"fusion_mode": "early_fusion"}),
    "rgb_only": AblationVariant("rgb_only", modalities=("rgb",)),
    "pc_only": AblationVariant("pc_only", modalities=("pc",)),
}


def resolve_variant(name: str) -> AblationVariant:
    if name not in VARIANTS:
        raise ConfigError(f"unknown variant '{name}'. Must be one of {list(VARIANTS)}")
    return VARIANTS[name]


def variant_settings(settings: Settings, variant: AblationVariant) -> Settings:
    return with_fusion(settings, **variant.fusion_changes) if variant.fusion_changes else settings


class DiffusionPolicy(Module):
    def __init__(self, settings: Settings, task: TaskSpec, variant: AblationVariant, rng: np.random.Generator):
        super().__init__()
        settings = variant_settings(settings, variant)
        enc = settings.encoder
        self.settings = settings
        self.task = task
        self.variant = variant
        self.early_fusion = variant.fused and settings.fusion.fusion_mode == "early_fusion"
        self.uses_rgb = "rgb" in variant.modalities and not self.early_fusion
        self.uses_pc = "pc" in variant.modalities

        if self.uses_rgb:
            self.image_encoder = ImageEncoder(enc.image_resolution, enc.image_channels, rng)
        if self.uses_pc:
            self.point_encoder = PointEncoder(enc.point_count, enc.point_hidden, enc.point_feature_dim, rng,
                                              in_dim=6 if self.early_fusion else 3)
        self.state_encoder = StateEncoder(task.state_dim, enc.state_hidden, enc.state_feature_dim, rng)

        if variant.fused:
            self.fusion = FusionModule(settings.fusion, enc.image_feature_dim, enc.point_feature_dim,
                                       enc.state_feature_dim, rng)
            context_dim = self.fusion.context_dim
        else:
            branch = enc.image_feature_dim if self.uses_rgb else enc.point_feature_dim
            context_dim = branch + enc.state_feature_dim
        self.context_dim = context_dim

        dif = settings.diffusion
        self.denoiser = NoisePredictor(dif.horizon, task.action_dim, context_dim, dif, rng)
        self.schedule = build_schedule(dif.steps, dif.schedule)

    def encoders(self) -> dict:
        return {name: getattr(self, name) for name in ("image_encoder", "point_encoder", "state_encoder")
                if hasattr(self, name)}

    def context(self, images, points, states, training: bool = False, rng=None, fault: str = "none") -> Tensor:
        """Conditioning context for a batch of preprocessed observations."""
        if fault not in FAULTS:
            raise ConfigError(f"unknown fault '{fault}'. Must be one of {FAULTS}")
        points = np.asarray(points)
        if self.early_fusion and fault == "rgb_missing":
            points = np.concatenate([points[..., :3], np.zeros_like(points[..., 3:])], axis=-1)
        elif not self.early_fusion:
            points = points[..., :3]

        rgb_feat = pc_feat = None
        if self.uses_rgb:
            rgb_feat = self.image_encoder(images)
            if fault == "rgb_missing":
                rgb_feat = rgb_feat * np.zeros(rgb_feat.shape, dtype=rgb_feat.dtype)
        if self.uses_pc:
            pc_feat = self.point_encoder(points)
            if fault == "pc_missing":
                pc_feat = pc_feat * np.zeros(pc_feat.shape, dtype=pc_feat.dtype)
        state_feat = self.state_encoder(states)

        if self.variant.fused:
            return self.fusion(rgb_feat, pc_feat, state_feat, training, rng)
        return ag.concat([rgb_feat if self.uses_rgb else pc_feat, state_feat], axis=-1)

    def loss(self, batch: dict, rng: np.random.Generator) -> Tensor:
        self.train()
        ctx = self.context(batch["images"], batch["points"], batch["states"], training=True, rng=rng)
        return training_loss(self.denoiser, batch["actions"], ctx, self.schedule, rng)

    def predict(self, images, points, states, rng: np.random.Generator, fault: str = "none") -> np.ndarray:
        """Normalized action chunks, (B, horizon, action_dim)."""
        self.eval()
        with no_grad():
            ctx = self.context(images, points, states, training=False, fault=fault)
        return denoise_sample(self.denoiser, ctx, self.schedule, rng, self.settings.diffusion.horizon,
                              self.task.action_dim)
