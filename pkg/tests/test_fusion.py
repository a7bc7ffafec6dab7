from dataclasses import replace

import numpy as np
import pytest

from src.autograd import Tensor, gradcheck
from src.config_loader import FusionConfig
from src.errors import ConfigError, ShapeError
from src.fusion import (BidirectionalCrossAttention, DropMask, FusionModule, draw_drop_masks,
                        element_dropout, modality_dropout)

TOL = 1e-3


def features(rng, batch=3, dim=8, dtype=np.float32):
    return Tensor(rng.standard_normal((batch, dim)), dtype=dtype)


def tiny_fusion(**changes) -> FusionConfig:
    return replace(FusionConfig(shared_dim=16, token_count=4, head_count=2), **changes)


def test_drop_mask_frequencies():
    masks = draw_drop_masks(100_000, 0.2, True, np.random.default_rng(0))
    for mask in (DropMask.DROP_RGB, DropMask.DROP_PC):
        assert 0.194 <= np.mean(masks == mask) <= 0.206
    assert 0.594 <= np.mean(masks == DropMask.KEEP_BOTH) <= 0.606


def test_eval_keeps_both_branches(rng):
    assert np.all(draw_drop_masks(1000, 0.5, False, rng) == DropMask.KEEP_BOTH)


def test_drop_probability_above_half_is_rejected(rng):
    with pytest.raises(ConfigError):
        draw_drop_masks(4, 0.6, True, rng)


def test_zero_drop_probability_is_identity(rng):
    rgb, pc = features(rng), features(rng)
    rgb_out, pc_out, masks = modality_dropout(rgb, pc, 0.0, True, rng)
    assert np.array_equal(rgb_out.data, rgb.data) and np.array_equal(pc_out.data, pc.data)
    assert np.all(masks == DropMask.KEEP_BOTH)


def test_dropped_branch_is_zeroed_without_rescale(rng):
    rgb, pc = features(rng, batch=200), features(rng, batch=200)
    rgb_out, pc_out, masks = modality_dropout(rgb, pc, 0.5, True, rng)
    assert not rgb_out.data[masks == DropMask.DROP_RGB].any()
    assert not pc_out.data[masks == DropMask.DROP_PC].any()
    kept = masks == DropMask.DROP_PC
    assert np.array_equal(rgb_out.data[kept], rgb.data[kept])


def test_element_dropout_is_inverted(rng):
    x = Tensor(np.ones((400, 50)), dtype=np.float32)
    out = element_dropout(x, 0.1, True, rng).data
    survivors = out[out != 0]
    assert np.allclose(survivors, 1.0 / 0.9)
    assert abs(np.mean(out) - 1.0) < 0.02
    assert element_dropout(x, 0.1, False, rng) is x


def test_residual_survives_zeroed_values(rng):
    block = BidirectionalCrossAttention(4, 2, rng)
    for attention in (block.rgb_to_pc, block.pc_to_rgb):
        attention.value.weight.data[:] = 0.0
    rgb = Tensor(rng.standard_normal((2, 4, 4)), dtype=np.float32)
    pc = Tensor(rng.standard_normal((2, 4, 4)), dtype=np.float32)
    rgb_out, pc_out = block(rgb, pc)
    assert np.array_equal(rgb_out.data, rgb.data)
    assert np.array_equal(pc_out.data, pc.data)


def test_attention_rows_sum_to_one(rng):
    block = BidirectionalCrossAttention(4, 2, rng)
    block(Tensor(rng.standard_normal((3, 4, 4))), Tensor(rng.standard_normal((3, 4, 4))))
    for weights in block.last_weights:
        assert weights.shape == (3, 2, 4, 4)
        assert np.allclose(weights.sum(axis=-1), 1.0, atol=1e-5)


def test_token_grids_must_match(rng):
    block = BidirectionalCrossAttention(4, 2, rng)
    with pytest.raises(ShapeError):
        block(Tensor(np.zeros((1, 4, 4))), Tensor(np.zeros((1, 2, 4))))


@pytest.mark.parametrize("use_residual", [True, False])
def test_bidirectional_attention_gradcheck(use_residual):
    rng = np.random.default_rng(4)
    block = BidirectionalCrossAttention(4, 2, rng, use_residual=use_residual).astype(np.float64)
    rgb = Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True, dtype=np.float64)
    pc = Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True, dtype=np.float64)

    def both():
        a, b = block(rgb, pc)
        return a + b * 0.5

    leaves = [rgb, pc, block.rgb_to_pc.query.weight, block.pc_to_rgb.value.weight]
    assert gradcheck(both, leaves) < TOL


def test_fusion_gradcheck_through_projection():
    rng = np.random.default_rng(5)
    fusion = FusionModule(tiny_fusion(), 8, 8, 8, rng).astype(np.float64)
    rgb, pc, state = (features(rng, 2, 8, np.float64) for _ in range(3))
    for leaf in (rgb, pc, state):
        leaf.requires_grad = True
    leaves = [rgb, pc, state, fusion.rgb_proj.weight, fusion.pc_proj.bias]
    assert gradcheck(lambda: fusion(rgb, pc, state), leaves) < TOL


@pytest.mark.parametrize("mode,expected", [("cross_attention", 40), ("concat", 40), ("early_fusion", 24)])
def test_context_length(rng, mode, expected):
    fusion = FusionModule(tiny_fusion(fusion_mode=mode), 8, 8, 8, rng)
    assert fusion.context_dim == expected
    out = fusion(features(rng), features(rng), features(rng), training=True, rng=rng)
    assert out.shape == (3, expected)


def test_state_branch_bypasses_dropout_and_attention(rng):
    fusion = FusionModule(tiny_fusion(modality_drop_p=0.5), 8, 8, 8, rng)
    state = features(rng, batch=50)
    joined = fusion.pre_dropout(features(rng, batch=50), features(rng, batch=50), state, training=True, rng=rng)
    assert np.array_equal(joined.data[:, -8:], state.data)
    assert set(np.unique(fusion.last_masks)) <= {0, 1, 2}


def test_disabled_modality_dropout_keeps_both(rng):
    fusion = FusionModule(tiny_fusion(use_modality_dropout=False), 8, 8, 8, rng)
    fusion(features(rng), features(rng), features(rng), training=True, rng=rng)
    assert np.all(fusion.last_masks == DropMask.KEEP_BOTH)


def test_state_width_mismatch(rng):
    fusion = FusionModule(tiny_fusion(), 8, 8, 8, rng)
    with pytest.raises(ShapeError):
        fusion(features(rng), features(rng), features(rng, dim=5))


def test_unknown_mode(rng):
    with pytest.raises(ConfigError):
        FusionModule(tiny_fusion(fusion_mode="late"), 8, 8, 8, rng)


def test_training_forward_is_seed_deterministic():
    fusion = FusionModule(tiny_fusion(), 8, 8, 8, np.random.default_rng(0))
    inputs = [features(np.random.default_rng(i)) for i in range(3)]
    a = fusion(*inputs, training=True, rng=np.random.default_rng(9)).data
    b = fusion(*inputs, training=True, rng=np.random.default_rng(9)).data
    assert np.array_equal(a, b)


def test_eval_forward_ignores_rng():
    fusion = FusionModule(tiny_fusion(), 8, 8, 8, np.random.default_rng(0))
    inputs = [features(np.random.default_rng(i)) for i in range(3)]
    a = fusion(*inputs, training=False, rng=np.random.default_rng(1)).data
    b = fusion(*inputs, training=False, rng=np.random.default_rng(2)).data
    assert np.array_equal(a, b)
