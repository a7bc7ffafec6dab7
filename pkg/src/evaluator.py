"""
Closed-loop evaluation: run a policy for N trials in fresh simulator
episodes and count successes.

Policies are wrapped in small runner objects that map the current
observation to a list of actions to execute before re-observing. The
diffusion runner executes the first `action_steps` actions of each sampled
chunk (receding horizon).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from .config_loader import Settings
from .dataset import frame_points
from .errors import ShapeError
from .expert import expert_action
from .policy import FAULTS
from .sim import Observation, RandomizationConfig, Simulator, SimState, TaskScene
from .trainer import LoadedPolicy, load_policy
from .utils import stable_id, stream_rng

logger = logging.getLogger("vgdp")


@dataclass
class EvalResult:
    task: str
    level: str
    split: str
    seed: int
    variant: str = ""
    fault: str = "none"
    outcomes: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    @property
    def trials(self) -> int:
        return len(self.outcomes)

    @property
    def successes(self) -> int:
        return int(sum(self.outcomes))

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else float("nan")


class ExpertRunner:
    def __init__(self, sim: Simulator):
        self.sim = sim

    def reset(self, episode: int):
        pass

    def act(self, obs: Observation, scene: TaskScene, state: SimState) -> list:
        return [expert_action(self.sim, scene, state)]


class RandomRunner:
    """Uniform actions in [-1, 1]; a chance-level baseline."""

    def __init__(self, action_dim: int, seed: int):
        self.action_dim = action_dim
        self.seed = seed
        self.rng = None

    def reset(self, episode: int):
        self.rng = stream_rng(self.seed, stable_id("random"), episode)

    def act(self, obs: Observation, scene: TaskScene, state: SimState) -> list:
        return [self.rng.uniform(-1.0, 1.0, size=self.action_dim)]


class DiffusionRunner:
    def __init__(self, loaded: LoadedPolicy, seed: int, fault: str = "none"):
        self.loaded = loaded
        self.settings = loaded.settings
        self.seed = seed
        self.fault = fault
        self.rng = None
        self.point_rng = None

    def reset(self, episode: int):
        self.rng = stream_rng(self.seed, stable_id("sample"), episode)
        self.point_rng = stream_rng(self.seed, stable_id("eval-points"), episode)

    def act(self, obs: Observation, scene: TaskScene, state: SimState) -> list:
        loaded = self.loaded
        image = obs.rgb.astype(np.float32) / np.float32(255.0)
        points = frame_points(obs.rgb, obs.depth, scene.camera, self.settings, self.point_rng)
        robot = loaded.state_norm.normalize(obs.state)
        chunk = loaded.policy.predict(image[None], points[None], robot[None], self.rng, fault=self.fault)[0]
        actions = loaded.action_norm.denormalize(chunk.astype(np.float64))
        return list(actions[:self.settings.diffusion.action_steps])


def run_episode(sim: Simulator, runner, task: str, rand: RandomizationConfig, episode_seed: int) -> tuple:
    """(success, steps taken) for one episode."""
    scene, state = sim.make_episode(task, rand, stream_rng(episode_seed, stable_id("episode")))
    while not state.done:
        obs = sim.observe(scene, state)
        for action in runner.act(obs, scene, state):
            state = sim.step(scene, state, action)
            if state.done:
                break
    return state.success, state.steps


def evaluate_runner(settings: Settings, runner, task: str, level: str, split: str, trials: int,
                    seed: int, variant: str = "", fault: str = "none") -> EvalResult:
    sim = Simulator(settings)
    rand = RandomizationConfig(level, split)
    result = EvalResult(task=task, level=level, split=split, seed=seed, variant=variant, fault=fault)
    # offset away from the demo-collection seed range
    base = stable_id(f"eval/{split}") + seed * 1_000_003
    for i in tqdm(range(trials), desc=f"eval {variant or 'policy'} {task} {level}/{split}", disable=None):
        runner.reset(i)
        success, steps = run_episode(sim, runner, task, rand, base + i)
        result.outcomes.append(bool(success))
        result.steps.append(int(steps))
    logger.info(f"{variant or 'policy'} {task} {level}/{split} fault={fault}: "
                f"{result.successes}/{result.trials} = {result.success_rate:.3f}")
    return result


def evaluate_policy(checkpoint, level: str, split: str, trials: int, seed: int, task: str = None,
                    fault: str = "none", settings: Settings = None) -> EvalResult:
    """Evaluate a checkpoint. `task` defaults to the task it was trained on."""
    if fault not in FAULTS:
        raise ValueError(f"unknown fault '{fault}'. Must be one of {FAULTS}")
    loaded = checkpoint if isinstance(checkpoint, LoadedPolicy) else load_policy(checkpoint)
    eval_settings = settings or loaded.settings
    task = task or loaded.metadata["task"]
    spec = eval_settings.task(task)
    trained = loaded.policy.task
    if (spec.action_dim, spec.state_dim) != (trained.action_dim, trained.state_dim):
        raise ShapeError(f"checkpoint expects action/state dims {(trained.action_dim, trained.state_dim)}, "
                         f"task {task} has {(spec.action_dim, spec.state_dim)}")
    enc, trained_enc = eval_settings.encoder, loaded.settings.encoder
    if (enc.image_resolution, enc.point_count) != (trained_enc.image_resolution, trained_enc.point_count):
        raise ShapeError("checkpoint observation resolution / point count differ from the evaluation settings")
    runner = DiffusionRunner(loaded, seed, fault)
    return evaluate_runner(eval_settings, runner, task, level, split, trials, seed,
                           variant=loaded.metadata.get("variant", ""), fault=fault)
