import numpy as np
import pytest

from conftest import episode
from src.errors import ConfigError, ShapeError, SimulationError
from src.render import render
from src.sim import MATERIAL_FACTORS, RandomizationConfig, Simulator


def test_level_factor_masks():
    l0, l1, l2 = RandomizationConfig("L0"), RandomizationConfig("L1"), RandomizationConfig("L2")
    assert (l0.materials, l0.table_pose, l0.camera) == (False, False, False)
    assert (l1.materials, l1.table_pose, l1.camera) == (True, True, False)
    assert (l2.materials, l2.table_pose, l2.camera) == (True, True, True)
    with pytest.raises(ConfigError):
        RandomizationConfig("L3")


def test_l0_ignores_the_seed(sim):
    (a, sa), (b, sb) = episode(sim, "reach_target", "L0", seed=1), episode(sim, "reach_target", "L0", seed=2)
    assert a.factors == b.factors
    assert np.array_equal(render(sim.scene_at(a, sa))[0], render(sim.scene_at(b, sb))[0])


def test_l1_keeps_camera_and_l2_moves_it(sim, tiny_settings):
    pool = tiny_settings.randomization.camera_pool
    for seed in range(20):
        s1, _ = episode(sim, "push_block", "L1", "ood", seed)
        assert s1.camera_index == pool["iid"][0]
        s2, _ = episode(sim, "push_block", "L2", "ood", seed)
        assert s2.camera_index in pool["ood"]


def test_ood_factors_avoid_iid_ranges(sim, tiny_settings):
    ranges = tiny_settings.randomization
    for seed in range(100):
        scene, _ = episode(sim, "reach_target", "L1", "ood", seed)
        for name in MATERIAL_FACTORS:
            lo, hi = ranges.interval(name, "iid")
            assert not lo <= scene.factors[name] <= hi, name
        yaw_lo, yaw_hi = ranges.interval("table_yaw", "iid")
        assert abs(scene.factors["table_yaw"]) > max(abs(yaw_lo), abs(yaw_hi))


def test_episode_is_determined_by_seed(sim):
    a, _ = episode(sim, "pick_place", "L2", "iid", 7)
    b, _ = episode(sim, "pick_place", "L2", "iid", 7)
    assert a.factors == b.factors
    assert np.array_equal(a.goal, b.goal)


def test_exactly_one_target(sim):
    for task in ("reach_target", "push_block", "pick_place"):
        scene, state = episode(sim, task, "L1", seed=5)
        full = sim.scene_at(scene, state)
        assert len(full.target_objects()) == 1, task


def test_zero_action_changes_nothing(sim):
    scene, state = episode(sim, "push_block")
    new = sim.step(scene, state, [0.0, 0.0, 0.0])
    assert np.array_equal(new.effector, state.effector)
    assert np.array_equal(new.movable, state.movable)
    assert new.aperture == state.aperture
    assert new.steps == 1


def test_actions_are_clamped_before_scaling(sim):
    scene, state = episode(sim, "reach_target")
    big = sim.step(scene, state, [5.0, -3.0, 0.0])
    unit = sim.step(scene, state, [1.0, -1.0, 0.0])
    assert np.array_equal(big.effector, unit.effector)
    assert np.allclose(big.effector - state.effector, [0.05, -0.05])


def test_wrong_action_length(sim):
    scene, state = episode(sim, "reach_target")
    with pytest.raises(ShapeError):
        sim.step(scene, state, [0.0, 0.0])


def test_step_after_termination(sim):
    scene, state = episode(sim, "reach_target")
    state.done = True
    with pytest.raises(SimulationError):
        sim.step(scene, state, [0.0, 0.0, 0.0])


def test_episode_ends_at_step_limit(sim, tiny_settings):
    scene, state = episode(sim, "reach_target")
    limit = tiny_settings.task("reach_target").step_limit
    for _ in range(limit):
        state = sim.step(scene, state, [0.0, 0.0, 0.0])
    assert state.done and not state.success and state.steps == limit


def test_success_threshold_is_closed(sim, tiny_settings):
    scene, state = episode(sim, "reach_target")
    scene.goal = np.zeros(2)
    threshold = tiny_settings.task("reach_target").success_threshold
    state.effector = np.array([threshold, 0.0])
    assert sim.check_success(scene, state)
    state.effector = np.array([0.0, 0.0])
    assert sim.check_success(scene, state)
    state.effector = np.array([threshold * 1.01, 0.0])
    assert not sim.check_success(scene, state)


def test_push_moves_block_to_contact(sim, tiny_settings):
    scene, state = episode(sim, "push_block")
    reach = tiny_settings.simulator.effector_radius + tiny_settings.task("push_block").layout["block_half"]
    state.effector = state.movable - np.array([reach + 0.01, 0.0])
    new = sim.step(scene, state, [1.0, 0.0, 0.0])
    assert np.linalg.norm(new.movable - new.effector) == pytest.approx(reach)
    assert new.movable[0] > state.movable[0]


def test_grasp_carry_release(sim, tiny_settings):
    scene, state = episode(sim, "pick_place")
    state.effector = state.movable.copy()
    for _ in range(2):
        state = sim.step(scene, state, [0.0, 0.0, -1.0])
    assert state.held and state.aperture == 0.0
    state = sim.step(scene, state, [1.0, 0.0, 0.0])
    assert np.array_equal(state.movable, state.effector)
    assert sim.scene_at(scene, state).objects[-2].center[2] == tiny_settings.simulator.lift_height
    state = sim.step(scene, state, [0.0, 0.0, 1.0])
    assert not state.held


def test_closing_away_from_cube_grasps_nothing(sim):
    scene, state = episode(sim, "pick_place")
    for _ in range(2):
        state = sim.step(scene, state, [0.0, 0.0, -1.0])
    assert not state.held


def test_objects_stay_above_table(sim):
    for task in ("reach_target", "push_block", "pick_place"):
        scene, state = episode(sim, task, "L2", seed=9)
        for shape in sim.scene_at(scene, state).objects:
            bottom = shape.center[2] - (shape.radius if hasattr(shape, "radius") else shape.half_extents[2])
            assert bottom >= -1e-6


def test_observation_shapes(sim, tiny_settings):
    scene, state = episode(sim, "reach_target")
    obs = sim.observe(scene, state)
    res = tiny_settings.encoder.image_resolution
    assert obs.rgb.shape == (res, res, 3) and obs.rgb.dtype == np.uint8
    assert obs.depth.shape == (res, res) and obs.depth.dtype == np.float32
    assert obs.state.tolist() == pytest.approx([-0.30, 0.0, 1.0])


def test_cameras_built_per_pose(tiny_settings):
    sim = Simulator(tiny_settings)
    assert len(sim.cameras) == len(tiny_settings.simulator.camera_poses)
