import numpy as np
import pytest

from src.errors import ConfigError
from src.policy import VARIANTS, resolve_variant, variant_settings
from src.trainer import build_policy


def observation_batch(settings, batch=2, seed=0):
    rng = np.random.default_rng(seed)
    res, count = settings.encoder.image_resolution, settings.encoder.point_count
    return (rng.random((batch, res, res, 3)).astype(np.float32),
            rng.standard_normal((batch, count, 6)).astype(np.float32),
            rng.uniform(-1, 1, (batch, 3)).astype(np.float32))


def test_unknown_variant():
    with pytest.raises(ConfigError):
        resolve_variant("late_fusion")


def test_variant_settings_apply_fusion_changes(tiny_settings):
    assert variant_settings(tiny_settings, VARIANTS["no_residual"]).fusion.use_residual is False
    assert variant_settings(tiny_settings, VARIANTS["concat"]).fusion.fusion_mode == "concat"
    assert variant_settings(tiny_settings, VARIANTS["vgdp"]) is tiny_settings


@pytest.mark.parametrize("name", list(VARIANTS))
def test_every_variant_predicts_bounded_chunks(tiny_settings, name):
    policy = build_policy(tiny_settings, "reach_target", name, seed=0)
    images, points, states = observation_batch(tiny_settings)
    chunk = policy.predict(images, points, states, np.random.default_rng(0))
    assert chunk.shape == (2, tiny_settings.diffusion.horizon, 3)
    assert np.all(np.abs(chunk) <= 1.0)


def test_rgb_only_never_touches_the_point_encoder(tiny_settings):
    policy = build_policy(tiny_settings, "reach_target", "rgb_only", seed=0)
    assert "point_encoder" not in policy.encoders()
    policy.predict(*observation_batch(tiny_settings), np.random.default_rng(0))
    assert policy.image_encoder.calls == 1 and policy.state_encoder.calls == 1
    assert not any(name.startswith("point_encoder") for name, _ in policy.named_parameters())


def test_pc_only_never_touches_the_image_encoder(tiny_settings):
    policy = build_policy(tiny_settings, "reach_target", "pc_only", seed=0)
    assert set(policy.encoders()) == {"point_encoder", "state_encoder"}
    policy.predict(*observation_batch(tiny_settings), np.random.default_rng(0))
    assert policy.point_encoder.calls == 1


def test_early_fusion_feeds_coloured_points(tiny_settings):
    policy = build_policy(tiny_settings, "reach_target", "early_fusion", seed=0)
    assert "image_encoder" not in policy.encoders()
    assert policy.point_encoder.in_dim == 6
    assert policy.context_dim == tiny_settings.fusion.shared_dim + tiny_settings.encoder.state_feature_dim


def test_context_widths(tiny_settings):
    enc, fusion = tiny_settings.encoder, tiny_settings.fusion
    widths = {name: build_policy(tiny_settings, "reach_target", name, 0).context_dim
              for name in ("vgdp", "concat", "rgb_only", "pc_only")}
    assert widths["vgdp"] == widths["concat"] == 2 * fusion.shared_dim + enc.state_feature_dim
    assert widths["rgb_only"] == enc.image_feature_dim + enc.state_feature_dim
    assert widths["pc_only"] == enc.point_feature_dim + enc.state_feature_dim


def test_initialization_is_seeded(tiny_settings):
    a = build_policy(tiny_settings, "push_block", "vgdp", seed=4).state_dict()
    b = build_policy(tiny_settings, "push_block", "vgdp", seed=4).state_dict()
    c = build_policy(tiny_settings, "push_block", "vgdp", seed=5).state_dict()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not all(np.array_equal(a[k], c[k]) for k in a)


def test_missing_rgb_fault_matches_zeroed_features(tiny_settings):
    policy = build_policy(tiny_settings, "reach_target", "vgdp", seed=0)
    images, points, states = observation_batch(tiny_settings)
    faulted = policy.context(images, points, states, fault="rgb_missing").data
    healthy = policy.context(images, points, states).data
    assert faulted.shape == healthy.shape
    assert not np.array_equal(faulted, healthy)
    with pytest.raises(ConfigError):
        policy.context(images, points, states, fault="both_missing")


def test_training_loss_is_finite(tiny_settings):
    policy = build_policy(tiny_settings, "reach_target", "vgdp", seed=0)
    images, points, states = observation_batch(tiny_settings, batch=3)
    actions = np.random.default_rng(1).uniform(-1, 1, (3, tiny_settings.diffusion.horizon, 3)).astype(np.float32)
    loss = policy.loss({"images": images, "points": points, "states": states, "actions": actions},
                       np.random.default_rng(2))
    assert np.isfinite(loss.item())
    loss.backward()
    assert policy.denoiser.mlp.fc0.weight.grad is not None
