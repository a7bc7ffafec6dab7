import pytest

from src.errors import ShapeError
from src.evaluator import ExpertRunner, RandomRunner, evaluate_policy, evaluate_runner
from src.sim import Simulator
from src.trainer import train_policy


@pytest.fixture
def reach_checkpoint(reach_store, tiny_settings, tmp_path):
    return train_policy(reach_store, tiny_settings, "vgdp", 0, tmp_path / "reach.ckpt", steps=2).checkpoint


def test_expert_succeeds_on_every_l0_trial(tiny_settings):
    for task in ("reach_target", "push_block"):
        result = evaluate_runner(tiny_settings, ExpertRunner(Simulator(tiny_settings)), task, "L0", "iid", 50, 0)
        assert result.trials == 50
        assert result.success_rate == 1.0, task


def test_random_actions_rarely_push_the_block_home(tiny_settings):
    result = evaluate_runner(tiny_settings, RandomRunner(3, seed=0), "push_block", "L0", "iid", 100, 0)
    assert result.success_rate < 0.05


def test_random_runner_is_seeded(tiny_settings):
    a = evaluate_runner(tiny_settings, RandomRunner(3, seed=1), "reach_target", "L1", "ood", 5, 1)
    b = evaluate_runner(tiny_settings, RandomRunner(3, seed=1), "reach_target", "L1", "ood", 5, 1)
    assert (a.outcomes, a.steps) == (b.outcomes, b.steps)


def test_zero_trials_has_undefined_rate(tiny_settings):
    result = evaluate_runner(tiny_settings, RandomRunner(3, seed=0), "reach_target", "L0", "iid", 0, 0)
    assert result.trials == 0
    assert result.success_rate != result.success_rate


def test_policy_evaluation_is_deterministic(reach_checkpoint):
    a = evaluate_policy(reach_checkpoint, "L1", "iid", 2, seed=3)
    b = evaluate_policy(reach_checkpoint, "L1", "iid", 2, seed=3)
    assert (a.outcomes, a.steps) == (b.outcomes, b.steps)
    assert (a.task, a.variant, a.split) == ("reach_target", "vgdp", "iid")


def test_resolution_mismatch_is_rejected(reach_checkpoint, desk_settings):
    with pytest.raises(ShapeError):
        evaluate_policy(reach_checkpoint, "L0", "iid", 1, seed=0, settings=desk_settings)


def test_sensor_faults(reach_checkpoint):
    for fault in ("rgb_missing", "pc_missing"):
        result = evaluate_policy(reach_checkpoint, "L0", "iid", 1, seed=0, fault=fault)
        assert result.fault == fault and result.trials == 1
    with pytest.raises(ValueError):
        evaluate_policy(reach_checkpoint, "L0", "iid", 1, seed=0, fault="blind")
