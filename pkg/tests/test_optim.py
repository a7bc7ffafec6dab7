import numpy as np
import pytest

from src.autograd import Tensor, mse_loss
from src.errors import NumericalError
from src.layers import MLP
from src.optim import Adam


def test_zero_gradient_keeps_parameters():
    p = Tensor([1.0, -1.0], requires_grad=True)
    opt = Adam([("p", p)], lr=0.1)
    p.grad = np.zeros(2, dtype=np.float32)
    opt.step()
    assert p.data.tolist() == [1.0, -1.0]
    assert not opt.m["p"].any() and not opt.v["p"].any()


def test_zero_gradient_decays_moments():
    p = Tensor([1.0], requires_grad=True)
    opt = Adam([("p", p)], lr=0.1)
    p.grad = np.ones(1, dtype=np.float32)
    opt.step()
    m, v = opt.m["p"].copy(), opt.v["p"].copy()
    p.grad = np.zeros(1, dtype=np.float32)
    opt.step()
    assert np.allclose(opt.m["p"], 0.9 * m)
    assert np.allclose(opt.v["p"], 0.999 * v)


def test_first_step_is_about_lr():
    p = Tensor([0.0], requires_grad=True)
    opt = Adam([("p", p)], lr=0.1)
    p.grad = np.ones(1, dtype=np.float32)
    opt.step()
    assert p.data[0] == pytest.approx(-0.1, rel=1e-5)


def test_non_finite_gradient_fails_fast():
    p = Tensor([0.0], requires_grad=True)
    opt = Adam([("p", p)])
    p.grad = np.array([np.nan], dtype=np.float32)
    with pytest.raises(NumericalError):
        opt.step()
    assert opt.step_count == 0


def _run(seed: int) -> dict:
    rng = np.random.default_rng(seed)
    net = MLP([3, 8, 2], rng)
    opt = Adam(net.named_parameters(), lr=1e-2)
    x = Tensor(rng.standard_normal((16, 3)))
    target = rng.standard_normal((16, 2)).astype(np.float32)
    for _ in range(100):
        opt.zero_grad()
        mse_loss(net(x), target).backward()
        opt.step()
    return net.state_dict()


def test_identical_runs_are_bit_identical():
    a, b = _run(4), _run(4)
    assert list(a) == list(b)
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_state_arrays_round_trip():
    p = Tensor([1.0, 2.0], requires_grad=True)
    opt = Adam([("p", p)], lr=0.1)
    p.grad = np.array([0.5, -0.5], dtype=np.float32)
    opt.step()
    other = Adam([("p", Tensor([1.0, 2.0], requires_grad=True))], lr=0.1)
    other.load_state_arrays(opt.state_arrays(), opt.step_count)
    assert other.step_count == 1
    assert np.array_equal(other.m["p"], opt.m["p"])
    assert np.array_equal(other.v["p"], opt.v["p"])
