import copy
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .errors import ConfigError


VALID_FUSION_MODES = {"cross_attention", "concat", "early_fusion"}
VALID_SCHEDULES = {"squared_cosine", "linear"}
VALID_TASKS = ("reach_target", "push_block", "pick_place")
VALID_LEVELS = ("L0", "L1", "L2")
VALID_SPLITS = ("iid", "ood")


@dataclass(frozen=True)
class EncoderConfig:
    image_resolution: int = 64
    image_channels: tuple = (8, 16, 32, 64, 128)
    image_feature_dim: int = 128
    point_count: int = 256
    point_hidden: tuple = (64, 128)
    point_feature_dim: int = 64
    state_hidden: int = 64
    state_feature_dim: int = 64


@dataclass(frozen=True)
class FusionConfig:
    shared_dim: int = 64
    token_count: int = 8
    head_count: int = 4
    modality_drop_p: float = 0.2
    element_drop_p: float = 0.1
    attention_drop_p: float = 0.0
    fusion_mode: str = "cross_attention"
    use_residual: bool = True
    use_modality_dropout: bool = True

    @property
    def token_dim(self) -> int:
        return self.shared_dim // self.token_count


@dataclass(frozen=True)
class DiffusionConfig:
    steps: int = 50
    schedule: str = "squared_cosine"
    horizon: int = 8
    action_steps: int = 4
    time_embed_dim: int = 32
    hidden_dim: int = 256
    hidden_layers: int = 3


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainingConfig:
    steps: int = 2000
    batch_size: int = 64
    obs_window: int = 1
    log_every: int = 100
    checkpoint_every: int = 0


@dataclass(frozen=True)
class TaskSpec:
    name: str
    success_threshold: float
    step_limit: int
    action_dim: int
    state_dim: int
    layout: dict = field(default_factory=dict, hash=False, compare=False)


@dataclass(frozen=True)
class SimulatorConfig:
    max_delta: float
    aperture_rate: float
    effector_height: float
    effector_radius: float
    effector_start: tuple
    effector_albedo: tuple
    grasp_radius: float
    lift_height: float
    workspace_min: tuple
    workspace_max: tuple
    table_half_extents: tuple
    light_direction: tuple
    light_intensity: float
    ambient: float
    fov_deg: float
    camera_distance: float
    camera_target: tuple
    camera_poses: tuple
    tasks: dict = field(hash=False, compare=False)


@dataclass(frozen=True)
class RandomizationRanges:
    """Per-factor closed intervals for both splits, plus the L0 canonical values."""
    factors: dict
    camera_pool: dict
    canonical: dict

    def interval(self, factor: str, split: str) -> tuple:
        return tuple(self.factors[factor][split])


@dataclass(frozen=True)
class EvaluationConfig:
    demos: int = 100
    trials: int = 200
    ablation_tasks: tuple = ("reach_target", "push_block")
    ablation_levels: tuple = VALID_LEVELS
    ablation_seeds: tuple = (0, 1, 2)
    ablation_variants: tuple = ()


@dataclass(frozen=True)
class Settings:
    preset: str
    encoder: EncoderConfig
    fusion: FusionConfig
    diffusion: DiffusionConfig
    optimizer: OptimizerConfig
    training: TrainingConfig
    simulator: SimulatorConfig
    randomization: RandomizationRanges
    evaluation: EvaluationConfig
    logging: dict = field(default_factory=dict, hash=False, compare=False)
    resolved: dict = field(default_factory=dict, hash=False, compare=False, repr=False)

    def task(self, name: str) -> TaskSpec:
        if name not in self.simulator.tasks:
            raise ConfigError(f"unknown task '{name}'. Must be one of {sorted(self.simulator.tasks)}")
        return self.simulator.tasks[name]


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name)
    if not isinstance(value, dict):
        raise ConfigError(f"config is missing the '{name}' section")
    return value


def resolve_config(raw: dict, preset: str = None) -> dict:
    """Merge the chosen preset over the shared sections. Returns a plain dict."""
    if not raw or "presets" not in raw:
        raise ConfigError("config must have a top-level 'presets' key")
    preset = preset or raw.get("preset", "desk")
    presets = raw["presets"]
    if preset not in presets:
        raise ConfigError(f"unknown preset '{preset}'. Must be one of {sorted(presets)}")
    resolved = {k: copy.deepcopy(v) for k, v in raw.items() if k not in ("presets", "preset")}
    resolved = _deep_merge(resolved, presets[preset])
    resolved["preset"] = preset
    return resolved


def load_settings(config_path: str, preset: str = None, overrides: dict = None) -> Settings:
    """Load YAML settings, select a preset, apply dotted-key overrides and validate."""
    path = Path(config_path)
    if not path.exists():
        raise FileNotFoundError(f"Settings config not found: {config_path}")

    with open(path, "r") as f:
        raw = yaml.safe_load(f)

    resolved = resolve_config(raw, preset)
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        _section(resolved, section)[key] = value
    return build_settings(resolved)


def build_settings(resolved: dict) -> Settings:
    """Turn a resolved config dict (e.g. one embedded in a checkpoint) into Settings."""
    enc = _section(resolved, "encoder")
    fus = _section(resolved, "fusion")
    dif = _section(resolved, "diffusion")
    sim = _section(resolved, "simulator")
    rnd = _section(resolved, "randomization")
    ev = resolved.get("evaluation", {})
    ablation = ev.get("ablation", {})

    try:
        encoder = EncoderConfig(
            image_resolution=int(enc["image_resolution"]),
            image_channels=tuple(int(c) for c in enc["image_channels"]),
            image_feature_dim=int(enc["image_feature_dim"]),
            point_count=int(enc["point_count"]),
            point_hidden=tuple(int(c) for c in enc["point_hidden"]),
            point_feature_dim=int(enc["point_feature_dim"]),
            state_hidden=int(enc["state_hidden"]),
            state_feature_dim=int(enc["state_feature_dim"]),
        )
        fusion = FusionConfig(**{k: fus[k] for k in FusionConfig.__dataclass_fields__})
        diffusion = DiffusionConfig(**{k: dif[k] for k in DiffusionConfig.__dataclass_fields__})
        optimizer = OptimizerConfig(**_section(resolved, "optimizer"))
        training = TrainingConfig(**_section(resolved, "training"))
        tasks = {}
        for name, entry in _section(sim, "tasks").items():
            tasks[name] = TaskSpec(
                name=name,
                success_threshold=float(entry["success_threshold"]),
                step_limit=int(entry["step_limit"]),
                action_dim=int(entry["action_dim"]),
                state_dim=int(entry["state_dim"]),
                layout=dict(entry.get("layout", {})),
            )
        light = _section(sim, "light")
        camera = _section(sim, "camera")
        simulator = SimulatorConfig(
            max_delta=float(sim["max_delta"]),
            aperture_rate=float(sim["aperture_rate"]),
            effector_height=float(sim["effector_height"]),
            effector_radius=float(sim["effector_radius"]),
            effector_start=tuple(sim["effector_start"]),
            effector_albedo=tuple(sim["effector_albedo"]),
            grasp_radius=float(sim["grasp_radius"]),
            lift_height=float(sim["lift_height"]),
            workspace_min=tuple(sim["workspace"]["min"]),
            workspace_max=tuple(sim["workspace"]["max"]),
            table_half_extents=tuple(sim["table"]["half_extents"]),
            light_direction=tuple(light["direction"]),
            light_intensity=float(light["intensity"]),
            ambient=float(light["ambient"]),
            fov_deg=float(camera["fov_deg"]),
            camera_distance=float(camera["distance"]),
            camera_target=tuple(camera["target"]),
            camera_poses=tuple(tuple(p) for p in camera["poses"]),
            tasks=tasks,
        )
        randomization = RandomizationRanges(
            factors={k: {s: tuple(v[s]) for s in VALID_SPLITS} for k, v in rnd["factors"].items()},
            camera_pool={s: tuple(rnd["camera_pool"][s]) for s in VALID_SPLITS},
            canonical=dict(rnd["canonical"]),
        )
    except KeyError as e:
        raise ConfigError(f"config is missing key {e}") from None
    except TypeError as e:
        raise ConfigError(f"config has an unexpected or malformed key: {e}") from None

    evaluation = EvaluationConfig(
        demos=int(ev.get("demos", 100)),
        trials=int(ev.get("trials", 200)),
        ablation_tasks=tuple(ablation.get("tasks", ("reach_target", "push_block"))),
        ablation_levels=tuple(ablation.get("levels", VALID_LEVELS)),
        ablation_seeds=tuple(int(s) for s in ablation.get("seeds", (0, 1, 2))),
        ablation_variants=tuple(ablation.get("variants", ())),
    )

    settings = Settings(
        preset=resolved.get("preset", "desk"),
        encoder=encoder,
        fusion=fusion,
        diffusion=diffusion,
        optimizer=optimizer,
        training=training,
        simulator=simulator,
        randomization=randomization,
        evaluation=evaluation,
        logging=dict(resolved.get("logging", {})),
        resolved=resolved,
    )
    validate_settings(settings)
    return settings


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_fusion(fusion: FusionConfig):
    if fusion.fusion_mode not in VALID_FUSION_MODES:
        raise ConfigError(f"fusion.fusion_mode '{fusion.fusion_mode}' must be one of {sorted(VALID_FUSION_MODES)}")
    if fusion.shared_dim < 1 or fusion.token_count < 1 or fusion.head_count < 1:
        raise ConfigError("fusion dims must all be >= 1")
    if fusion.shared_dim % fusion.token_count:
        raise ConfigError(f"fusion.shared_dim {fusion.shared_dim} not divisible by token_count {fusion.token_count}")
    if fusion.token_dim % fusion.head_count:
        raise ConfigError(f"fusion token dim {fusion.token_dim} not divisible by head_count {fusion.head_count}")
    for key in ("modality_drop_p", "element_drop_p", "attention_drop_p"):
        value = getattr(fusion, key)
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"fusion.{key} must lie in [0, 1], got {value}")
    if fusion.modality_drop_p > 0.5:
        raise ConfigError(f"fusion.modality_drop_p must be <= 0.5 (keep_both = 1 - 2p), got {fusion.modality_drop_p}")


def _intervals_disjoint(a: tuple, b: tuple) -> bool:
    return a[1] < b[0] or b[1] < a[0]


def validate_settings(settings: Settings):
    enc = settings.encoder
    for key in ("image_resolution", "image_feature_dim", "point_count", "point_feature_dim",
                "state_hidden", "state_feature_dim"):
        if getattr(enc, key) < 1:
            raise ConfigError(f"encoder.{key} must be >= 1")
    if len(enc.image_channels) != 5:
        raise ConfigError("encoder.image_channels must list the stem plus 4 stage widths")
    if enc.image_channels[-1] != enc.image_feature_dim:
        raise ConfigError("encoder.image_channels[-1] must equal encoder.image_feature_dim")

    validate_fusion(settings.fusion)

    dif = settings.diffusion
    if dif.steps < 1:
        raise ConfigError("diffusion.steps must be >= 1")
    if dif.schedule not in VALID_SCHEDULES:
        raise ConfigError(f"diffusion.schedule '{dif.schedule}' must be one of {sorted(VALID_SCHEDULES)}")
    if not 1 <= dif.action_steps <= dif.horizon:
        raise ConfigError("diffusion.action_steps must lie in [1, horizon]")
    if settings.training.obs_window != 1:
        raise ConfigError("training.obs_window: only a single current frame is supported")

    for name, task in settings.simulator.tasks.items():
        if name not in VALID_TASKS:
            raise ConfigError(f"simulator.tasks: unknown task '{name}'")
        if task.success_threshold <= 0:
            raise ConfigError(f"task {name}: success_threshold must be > 0")
        if task.step_limit < 1:
            raise ConfigError(f"task {name}: step_limit must be >= 1")

    rnd = settings.randomization
    for factor, ranges in rnd.factors.items():
        iid, ood = ranges["iid"], ranges["ood"]
        if iid[0] > iid[1] or ood[0] > ood[1]:
            raise ConfigError(f"randomization.{factor}: interval bounds reversed")
        if not _intervals_disjoint(iid, ood):
            raise ConfigError(f"randomization.{factor}: iid {iid} and ood {ood} ranges intersect")
    pool_iid, pool_ood = set(rnd.camera_pool["iid"]), set(rnd.camera_pool["ood"])
    if pool_iid & pool_ood:
        raise ConfigError("randomization.camera_pool: iid and ood pose indices overlap")
    n_poses = len(settings.simulator.camera_poses)
    if any(not 0 <= i < n_poses for i in pool_iid | pool_ood):
        raise ConfigError("randomization.camera_pool references a pose index outside simulator.camera.poses")


# ---------------------------------------------------------------------------
# Overrides and hashing
# ---------------------------------------------------------------------------

def with_fusion(settings: Settings, **changes) -> Settings:
    """Copy of settings with fusion keys replaced (ablation flags)."""
    fusion = replace(settings.fusion, **changes)
    validate_fusion(fusion)
    resolved = copy.deepcopy(settings.resolved)
    resolved.setdefault("fusion", {}).update(changes)
    return replace(settings, fusion=fusion, resolved=resolved)


def hashed_config(settings: Settings) -> dict:
    """The configuration that determines artifacts (logging excluded)."""
    return {k: v for k, v in settings.resolved.items() if k != "logging"}


def config_hash(settings: Settings) -> str:
    canonical = json.dumps(hashed_config(settings), sort_keys=True, separators=(",", ":"), default=list)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


