"""
Demonstration collection and the training-sample view of an episode store.

Every frame goes through the same preprocessing at training and at
evaluation time: rgb scaled to [0, 1]; depth backprojected, cropped to the
workspace, resampled to point_count and re-centred on the workspace box.
"""

import logging
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from .config_loader import Settings
from .errors import ConfigError, SimulationError
from .expert import expert_action
from .geometry import (CameraModel, PointCloud, WorkspaceBox, backproject, crop_workspace,
                       normalize_points, resample_to_count)
from .sim import RandomizationConfig, Simulator
from .storage import EpisodeRecord, EpisodeStore
from .utils import stable_id, stream_rng

logger = logging.getLogger("vgdp")


@dataclass(eq=False)
class Normalizer:
    """Per-dimension min/max affine map onto [-1, 1]. Constant dimensions map to 0."""
    low: np.ndarray
    high: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray) -> "Normalizer":
        data = np.asarray(data, dtype=np.float64).reshape(-1, np.shape(data)[-1])
        return cls(data.min(axis=0), data.max(axis=0))

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.low) + np.asarray(self.high)) / 2.0

    @property
    def half_range(self) -> np.ndarray:
        half = (np.asarray(self.high) - np.asarray(self.low)) / 2.0
        return np.where(half > 0, half, 1.0)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.center) / self.half_range).astype(np.float32)

    def denormalize(self, y: np.ndarray) -> np.ndarray:
        return y * self.half_range + self.center

    def to_dict(self) -> dict:
        return {"low": np.asarray(self.low).tolist(), "high": np.asarray(self.high).tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Normalizer":
        return cls(np.array(data["low"], dtype=np.float64), np.array(data["high"], dtype=np.float64))


def workspace_box(settings: Settings) -> WorkspaceBox:
    return WorkspaceBox(settings.simulator.workspace_min, settings.simulator.workspace_max)


def frame_points(rgb: np.ndarray, depth: np.ndarray, camera: CameraModel, settings: Settings,
                 rng: np.random.Generator) -> np.ndarray:
    """(point_count, 6) array: workspace-centred xyz followed by rgb in [0, 1]."""
    box = workspace_box(settings)
    cloud = crop_workspace(backproject(depth, rgb, camera), box)
    if len(cloud) == 0:
        logger.warning("Empty point cloud after cropping; substituting the workspace centre")
        cloud = PointCloud(box.center[None, :], np.zeros((1, 3)))
    cloud = normalize_points(resample_to_count(cloud, settings.encoder.point_count, rng), box)
    return cloud.features(with_colors=True)


def action_chunk(actions: np.ndarray, start: int, horizon: int) -> np.ndarray:
    """actions[start:start + horizon], padded with zero (hold) actions past the end."""
    chunk = np.zeros((horizon, actions.shape[1]), dtype=actions.dtype)
    tail = actions[start:start + horizon]
    chunk[:len(tail)] = tail
    return chunk


# ---------------------------------------------------------------------------
# Collection
# ---------------------------------------------------------------------------

def record_expert_episode(sim: Simulator, task: str, rand: RandomizationConfig, seed: int) -> tuple:
    """Roll the scripted expert out once. Returns (EpisodeRecord, success)."""
    scene, state = sim.make_episode(task, rand, stream_rng(seed, stable_id("episode")))
    rgbs, depths, states, actions = [], [], [], []
    while not state.done:
        obs = sim.observe(scene, state)
        action = np.clip(expert_action(sim, scene, state), -1.0, 1.0)
        rgbs.append(obs.rgb)
        depths.append(obs.depth)
        states.append(obs.state)
        actions.append(action.astype(np.float32))
        state = sim.step(scene, state, action)
    record = EpisodeRecord(
        rgb=np.stack(rgbs), depth=np.stack(depths), state=np.stack(states), action=np.stack(actions),
        task=task, level=rand.level, split=rand.split, seed=seed, camera=scene.camera.to_dict(),
    )
    return record, state.success


def collect_demos(settings: Settings, task: str, level: str, count: int, out_path, seed: int = 0) -> int:
    """Write `count` successful iid expert episodes. Failed rollouts are skipped with the next seed."""
    if count < 0:
        raise ConfigError(f"demo count must be >= 0, got {count}")
    sim = Simulator(settings)
    rand = RandomizationConfig(level, "iid")
    written, episode_seed = 0, seed * 1_000_003
    max_attempts = 5 * count + 10
    with EpisodeStore(out_path, mode="w") as store, tqdm(total=count, desc=f"collect {task} {level}",
                                                          disable=None) as bar:
        for _ in range(max_attempts):
            if written == count:
                break
            record, success = record_expert_episode(sim, task, rand, episode_seed)
            if success:
                store.write_episode(record)
                written += 1
                bar.update(1)
            else:
                logger.warning(f"Expert failed on {task} {level} seed={episode_seed}; resampling with next seed")
            episode_seed += 1
        if written < count:
            raise SimulationError(f"expert succeeded on only {written}/{count} episodes of {task} {level}")
    logger.info(f"Collected {written} {task} demos at {level} into {out_path}")
    return written


# ---------------------------------------------------------------------------
# Training samples
# ---------------------------------------------------------------------------

class DemoDataset:
    """Per-frame samples: (image, points, state) observation and its action chunk."""

    def __init__(self, records: list, settings: Settings, seed: int = 0):
        if not records:
            raise ConfigError("cannot train on an empty episode store")
        tasks = {r.task for r in records}
        if len(tasks) != 1:
            raise ConfigError(f"episode store mixes tasks {sorted(tasks)}")
        self.task = tasks.pop()
        horizon = settings.diffusion.horizon

        images, points, states, chunks = [], [], [], []
        for e, record in enumerate(records):
            camera = CameraModel.from_dict(record.camera)
            for t in range(len(record)):
                rng = stream_rng(seed, stable_id("points"), e, t)
                images.append(record.rgb[t])
                points.append(frame_points(record.rgb[t], record.depth[t], camera, settings, rng))
                states.append(record.state[t])
                chunks.append(action_chunk(record.action, t, horizon))
        self.images = np.stack(images)
        self.points = np.stack(points)
        raw_states = np.stack(states)
        raw_chunks = np.stack(chunks)
        self.state_norm = Normalizer.fit(np.concatenate([r.state for r in records]))
        # zero row keeps padded chunk entries inside the normalized range
        padding = np.zeros((1, raw_chunks.shape[-1]))
        self.action_norm = Normalizer.fit(np.concatenate([r.action for r in records] + [padding]))
        self.states = self.state_norm.normalize(raw_states)
        self.actions = self.action_norm.normalize(raw_chunks)
        logger.info(f"Dataset: {len(records)} episodes, {len(self)} frames of {self.task}")

    def __len__(self) -> int:
        return len(self.images)

    def sample(self, rng: np.random.Generator, batch_size: int) -> dict:
        index = rng.integers(len(self), size=batch_size)
        return {
            "images": self.images[index].astype(np.float32) / np.float32(255.0),
            "points": self.points[index],
            "states": self.states[index],
            "actions": self.actions[index],
        }


def load_records(store_path) -> list:
    with EpisodeStore(store_path, mode="r") as store:
        return list(store)
