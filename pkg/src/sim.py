"""
Desk-scale RGB-D manipulation simulator.

A planar effector (x, y plus a gripper aperture) hovers over a table. Three
tasks: reach_target (pick the right-colored sphere among look-alikes),
push_block (block shares the table's albedo, so only depth shows it),
pick_place (grasp a cube and release it on a goal marker).

Scene objects are laid out in the table frame and move with the table pose.
Randomization levels: L0 canonical scene; L1 adds materials and table pose;
L2 also draws the camera from the split's pose pool.
"""

import colorsys
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .config_loader import VALID_LEVELS, VALID_SPLITS, Settings, TaskSpec
from .errors import ConfigError, ShapeError, SimulationError
from .geometry import CameraModel, WorkspaceBox
from .render import Box, Scene, Sphere, render

logger = logging.getLogger("vgdp")

MATERIAL_FACTORS = ("target_hue", "distractor_hue", "table_hue", "wall_hue", "saturation", "value")


@dataclass(frozen=True)
class RandomizationConfig:
    level: str = "L0"
    split: str = "iid"

    def __post_init__(self):
        if self.level not in VALID_LEVELS:
            raise ConfigError(f"unknown randomization level '{self.level}'. Must be one of {VALID_LEVELS}")
        if self.split not in VALID_SPLITS:
            raise ConfigError(f"unknown split '{self.split}'. Must be one of {VALID_SPLITS}")

    @property
    def materials(self) -> bool:
        return self.level in ("L1", "L2")

    @property
    def table_pose(self) -> bool:
        return self.level in ("L1", "L2")

    @property
    def camera(self) -> bool:
        return self.level == "L2"


@dataclass(eq=False)
class TaskScene(Scene):
    """Static part of an episode's scene plus the task bookkeeping."""
    task: str = ""
    goal: np.ndarray = None
    movable: Box = None
    camera_index: int = 0
    factors: dict = field(default_factory=dict)


@dataclass(eq=False)
class SimState:
    task: str
    effector: np.ndarray
    aperture: float = 1.0
    movable: np.ndarray = None
    held: bool = False
    steps: int = 0
    done: bool = False
    success: bool = False

    def copy(self) -> "SimState":
        return replace(
            self,
            effector=self.effector.copy(),
            movable=None if self.movable is None else self.movable.copy(),
        )

    def robot_state(self) -> np.ndarray:
        return np.array([self.effector[0], self.effector[1], self.aperture], dtype=np.float32)


@dataclass(eq=False)
class Observation:
    rgb: np.ndarray
    depth: np.ndarray
    state: np.ndarray


def hsv_albedo(hue: float, saturation: float, value: float) -> np.ndarray:
    return np.array(colorsys.hsv_to_rgb(hue % 1.0, saturation, value))


class Simulator:
    def __init__(self, settings: Settings):
        self.settings = settings
        self.cfg = settings.simulator
        self.ranges = settings.randomization
        self.resolution = settings.encoder.image_resolution
        self.workspace = WorkspaceBox(self.cfg.workspace_min, self.cfg.workspace_max)
        self.cameras = [
            CameraModel.orbit(az, el, self.cfg.camera_distance, self.cfg.camera_target,
                              self.cfg.fov_deg, self.resolution)
            for az, el in self.cfg.camera_poses
        ]

    # -- episode construction ----------------------------------------------

    def sample_factors(self, rand: RandomizationConfig, rng: np.random.Generator) -> dict:
        """Material, table-pose and camera factors for one episode. Draw order is fixed."""
        factors = {name: float(self.ranges.canonical[name]) for name in MATERIAL_FACTORS}
        factors["table_yaw"] = 0.0
        factors["table_shift"] = (0.0, 0.0)
        factors["camera_index"] = int(self.ranges.camera_pool["iid"][0])
        if rand.level == "L0":
            return factors

        for name in MATERIAL_FACTORS:
            lo, hi = self.ranges.interval(name, rand.split)
            factors[name] = float(rng.uniform(lo, hi))
        factors["table_yaw"] = self._signed_draw("table_yaw", rand.split, rng)
        factors["table_shift"] = tuple(self._signed_draw("table_shift", rand.split, rng) for _ in range(2))
        if rand.camera:
            factors["camera_index"] = int(rng.choice(self.ranges.camera_pool[rand.split]))
        return factors

    def _signed_draw(self, factor: str, split: str, rng: np.random.Generator) -> float:
        # magnitude from the split's interval, random sign
        lo, hi = self.ranges.interval(factor, split)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        return sign * float(rng.uniform(lo, hi))

    def make_episode(self, task_name: str, rand: RandomizationConfig, rng: np.random.Generator) -> tuple:
        """Build (scene, initial state). At L0 the rng is never consulted."""
        task = self.settings.task(task_name)
        factors = self.sample_factors(rand, rng)
        sat, val = factors["saturation"], factors["value"]
        palette = {
            "target": hsv_albedo(factors["target_hue"], sat, val),
            "distractor": hsv_albedo(factors["distractor_hue"], sat, val),
            "table": hsv_albedo(factors["table_hue"], 0.5 * sat, val),
            "wall": hsv_albedo(factors["wall_hue"], 0.35 * sat, val),
        }
        yaw = factors["table_yaw"]
        shift = np.array(factors["table_shift"])
        half = np.asarray(self.cfg.table_half_extents, dtype=np.float64)
        table = Box(center=[shift[0], shift[1], -half[2]], half_extents=half, albedo=palette["table"],
                    yaw=yaw, name="table")

        def to_world(local_xy) -> np.ndarray:
            c, s = np.cos(yaw), np.sin(yaw)
            x, y = local_xy
            return shift + np.array([c * x - s * y, s * x + c * y])

        layout = task.layout
        objects, movable, movable_xy = [], None, None
        if task.name == "reach_target":
            radius = layout["sphere_radius"]
            slot = layout["canonical_target_slot"] if rand.level == "L0" else int(rng.integers(len(layout["slots"])))
            for i, local in enumerate(layout["slots"]):
                xy = to_world(local)
                is_target = i == slot
                objects.append(Sphere(center=[xy[0], xy[1], radius], radius=radius,
                                      albedo=palette["target" if is_target else "distractor"],
                                      name=f"sphere{i}", target=is_target))
            goal = to_world(layout["slots"][slot])
        else:
            if task.name == "push_block":
                size, start, marker_albedo, body_albedo = layout["block_half"], layout["block"], "target", "table"
            else:
                size, start, marker_albedo, body_albedo = layout["cube_half"], layout["target"], "distractor", "target"
            goal = to_world(layout["goal"])
            mh = layout["marker_height"] / 2.0
            objects.append(Box(center=[goal[0], goal[1], mh], half_extents=[layout["marker_half"]] * 2 + [mh],
                               albedo=palette[marker_albedo], yaw=yaw, name="goal_marker"))
            movable_xy = to_world(start)
            movable = Box(center=[movable_xy[0], movable_xy[1], size], half_extents=[size] * 3,
                          albedo=palette[body_albedo], yaw=yaw, name=task.name.split("_")[0], target=True)

        scene = TaskScene(
            camera=self.cameras[factors["camera_index"]],
            background=palette["wall"],
            light_direction=self.cfg.light_direction,
            light_intensity=self.cfg.light_intensity,
            ambient=self.cfg.ambient,
            table=table,
            objects=objects,
            task=task.name,
            goal=goal,
            movable=movable,
            camera_index=factors["camera_index"],
            factors=factors,
        )
        state = SimState(task=task.name, effector=np.array(self.cfg.effector_start, dtype=np.float64),
                         movable=movable_xy)
        return scene, state

    # -- dynamics -----------------------------------------------------------

    def step(self, scene: TaskScene, state: SimState, action) -> SimState:
        if state.done:
            raise SimulationError(f"{state.task}: step() called on a terminated episode (step {state.steps})")
        task = self.settings.task(state.task)
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape != (task.action_dim,):
            raise ShapeError(f"{state.task}: action of length {action.shape[0]}, expected {task.action_dim}")
        action = np.clip(action, -1.0, 1.0)

        new = state.copy()
        lo, hi = self.workspace.minimum[:2], self.workspace.maximum[:2]
        new.effector = np.clip(state.effector + action[:2] * self.cfg.max_delta, lo, hi)
        new.aperture = float(np.clip(state.aperture + action[2] * self.cfg.aperture_rate, 0.0, 1.0))

        if state.task == "push_block":
            new.movable = self._push(new.effector, state.movable, action[:2], task)
        elif state.task == "pick_place":
            if state.held:
                new.movable = new.effector.copy()
                if new.aperture >= 0.5:
                    new.held = False
            else:
                closing = state.aperture >= 0.5 > new.aperture
                if closing and np.linalg.norm(new.effector - state.movable) <= self.cfg.grasp_radius:
                    new.held = True
                    new.movable = new.effector.copy()

        new.steps += 1
        new.success = self.check_success(scene, new)
        new.done = new.success or new.steps >= task.step_limit
        return new

    def _push(self, effector: np.ndarray, block: np.ndarray, motion: np.ndarray, task: TaskSpec) -> np.ndarray:
        """Quasi-static disc contact: the block is moved out to touching distance."""
        reach = self.cfg.effector_radius + task.layout["block_half"]
        offset = block - effector
        dist = float(np.linalg.norm(offset))
        if dist >= reach:
            return block.copy()
        if dist > 1e-12:
            normal = offset / dist
        elif np.linalg.norm(motion) > 0:
            normal = motion / np.linalg.norm(motion)
        else:
            normal = np.array([1.0, 0.0])
        return effector + normal * reach

    def check_success(self, scene: TaskScene, state: SimState) -> bool:
        task = self.settings.task(state.task)
        if state.task == "reach_target":
            return bool(np.linalg.norm(state.effector - scene.goal) <= task.success_threshold)
        placed = np.linalg.norm(state.movable - scene.goal) <= task.success_threshold
        if state.task == "pick_place":
            return bool(placed and not state.held)
        return bool(placed)

    # -- observation --------------------------------------------------------

    def scene_at(self, scene: TaskScene, state: SimState) -> Scene:
        """The static scene plus the movable object and the effector at their current poses."""
        objects = list(scene.objects)
        if scene.movable is not None:
            z = self.cfg.lift_height if state.held else scene.movable.half_extents[2]
            objects.append(replace(scene.movable, center=[state.movable[0], state.movable[1], z]))
        objects.append(Sphere(center=[state.effector[0], state.effector[1], self.cfg.effector_height],
                              radius=self.cfg.effector_radius, albedo=self.cfg.effector_albedo,
                              name="effector"))
        return replace(scene, objects=objects)

    def observe(self, scene: TaskScene, state: SimState) -> Observation:
        rgb, depth = render(self.scene_at(scene, state))
        return Observation(rgb=rgb, depth=depth, state=state.robot_state())
