import numpy as np
import pytest

from src.autograd import Tensor, gradcheck
from src.encoders import ImageEncoder, PointEncoder, StateEncoder, build_encoders
from src.errors import ShapeError

TOL = 1e-3


def test_image_encoder_shape_and_determinism(tiny_settings, rng):
    enc = tiny_settings.encoder
    image = ImageEncoder(enc.image_resolution, enc.image_channels, rng)
    frame = rng.random((enc.image_resolution, enc.image_resolution, 3))
    a, b = image(frame), image(frame)
    assert a.shape == (enc.image_feature_dim,)
    assert np.array_equal(a.data, b.data)
    assert np.all(np.isfinite(a.data))


def test_image_encoder_rejects_wrong_resolution(rng):
    image = ImageEncoder(16, (4, 4, 8, 8, 8), rng)
    with pytest.raises(ShapeError):
        image(np.zeros((8, 8, 3)))


def test_image_encoder_gradcheck_8x8():
    rng = np.random.default_rng(1)
    image = ImageEncoder(8, (2, 3, 3, 4, 4), rng).astype(np.float64)
    x = Tensor(rng.random((1, 8, 8, 3)), requires_grad=True, dtype=np.float64)
    assert gradcheck(lambda: image(x), [x]) < TOL
    assert gradcheck(lambda: image(x), [image.stage2.conv1.weight]) < TOL


def test_point_encoder_full_widths(rng):
    point = PointEncoder(16, (64, 128), 64, rng)
    assert point(rng.random((16, 3))).shape == (64,)


def test_point_encoder_permutation_invariance(rng):
    point = PointEncoder(32, (8, 16), 8, rng).astype(np.float64)
    cloud = rng.standard_normal((32, 3))
    base = point(cloud).data
    for _ in range(100):
        assert np.allclose(point(cloud[rng.permutation(32)]).data, base, rtol=0.0, atol=1e-6)


def test_point_encoder_duplication_invariance(rng):
    point = PointEncoder(32, (8, 16), 8, rng).astype(np.float64)
    unique = rng.standard_normal((31, 3))
    for i in range(5):
        a = np.concatenate([unique, unique[:1]])
        b = np.concatenate([unique, unique[i + 1:i + 2]])
        assert np.allclose(point(a).data, point(b).data, rtol=0.0, atol=1e-6)


def test_point_encoder_rejects_wrong_count(rng):
    point = PointEncoder(32, (8, 16), 8, rng)
    with pytest.raises(ShapeError):
        point(np.zeros((31, 3)))


def test_point_encoder_gradcheck_16_points():
    rng = np.random.default_rng(2)
    point = PointEncoder(16, (4, 6), 5, rng, in_dim=6).astype(np.float64)
    x = Tensor(rng.standard_normal((2, 16, 6)), requires_grad=True, dtype=np.float64)
    assert gradcheck(lambda: point(x), [x, point.fc0.weight, point.head.weight]) < TOL


def test_state_encoder_zero_weights_give_bias(rng):
    state = StateEncoder(3, 8, 4, rng)
    for layer in (state.mlp.fc0, state.mlp.fc1):
        layer.weight.data[:] = 0.0
    out = state(np.array([0.3, -0.2, 1.0], dtype=np.float32))
    assert out.shape == (4,)
    assert np.array_equal(out.data, state.mlp.fc1.bias.data)


def test_state_encoder_length_mismatch(rng):
    with pytest.raises(ShapeError):
        StateEncoder(3, 8, 4, rng)(np.zeros(2))


def test_state_encoder_gradcheck():
    rng = np.random.default_rng(3)
    state = StateEncoder(3, 5, 4, rng).astype(np.float64)
    x = Tensor(rng.standard_normal((2, 3)), requires_grad=True, dtype=np.float64)
    assert gradcheck(lambda: state(x), [x, state.mlp.fc0.weight]) < TOL


def test_batch_composition_invariance(tiny_settings, rng):
    encoders = [enc.astype(np.float64) for enc in build_encoders(tiny_settings.encoder, 3, rng)]
    res = tiny_settings.encoder.image_resolution
    frames = rng.random((3, res, res, 3))
    clouds = rng.standard_normal((3, tiny_settings.encoder.point_count, 3))
    states = rng.standard_normal((3, 3))
    for enc, batch in zip(encoders, (frames, clouds, states)):
        together = enc(batch).data
        alone = enc(batch[1]).data
        assert np.allclose(together[1], alone, rtol=0.0, atol=1e-6)


def test_call_counters(tiny_settings, rng):
    image, point, state = build_encoders(tiny_settings.encoder, 3, rng, colored_points=True)
    assert point.in_dim == 6
    point(np.zeros((tiny_settings.encoder.point_count, 6)))
    assert (image.calls, point.calls, state.calls) == (0, 1, 0)
