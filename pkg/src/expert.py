"""Scripted proportional waypoint experts, one per task."""

import numpy as np

from .sim import Simulator, SimState, TaskScene

ALIGN_TOLERANCE = 0.01    # lateral offset (m) below which the effector is lined up behind the block
APPROACH_MARGIN = 0.02    # clearance behind the block before pushing
ARRIVE_TOLERANCE = 1e-3


def _toward(effector: np.ndarray, waypoint: np.ndarray, max_delta: float) -> np.ndarray:
    """Planar command that moves straight at the waypoint, scaled uniformly into [-1, 1]."""
    v = (waypoint - effector) / max_delta
    return v / max(1.0, float(np.max(np.abs(v))))


def push_waypoint(sim: Simulator, scene: TaskScene, state: SimState) -> np.ndarray:
    layout = sim.settings.task("push_block").layout
    contact = sim.cfg.effector_radius + layout["block_half"]
    to_goal = scene.goal - state.movable
    dist = float(np.linalg.norm(to_goal))
    if dist < 1e-9:
        return state.effector.copy()
    u = to_goal / dist
    rel = state.effector - state.movable
    along = float(rel @ u)
    lateral = float(np.linalg.norm(rel - along * u))
    if along < 0 and lateral < ALIGN_TOLERANCE:
        return scene.goal - u * contact
    return state.movable - u * (contact + APPROACH_MARGIN)


def expert_waypoint(sim: Simulator, scene: TaskScene, state: SimState) -> tuple:
    """(planar waypoint, aperture command in {-1, 0, +1}) for the current state."""
    if state.task == "reach_target":
        return scene.goal.copy(), 0.0
    if state.task == "push_block":
        return push_waypoint(sim, scene, state), 0.0

    # pick_place: go to the cube open, close on it, carry, open over the goal
    if not state.held:
        if np.linalg.norm(state.effector - state.movable) > ARRIVE_TOLERANCE:
            return state.movable.copy(), (1.0 if state.aperture < 1.0 else 0.0)
        return state.effector.copy(), -1.0
    if np.linalg.norm(state.movable - scene.goal) > ARRIVE_TOLERANCE:
        return scene.goal.copy(), (-1.0 if state.aperture > 0.0 else 0.0)
    return state.effector.copy(), 1.0


def expert_action(sim: Simulator, scene: TaskScene, state: SimState) -> np.ndarray:
    waypoint, grip = expert_waypoint(sim, scene, state)
    planar = _toward(state.effector, waypoint, sim.cfg.max_delta)
    return np.array([planar[0], planar[1], grip])
