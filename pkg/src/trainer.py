"""
Training loop: demo store → DiffusionPolicy checkpoint.

Given (store, settings, variant, seed) the run is deterministic down to the
checkpoint bytes. Checkpoints carry the optimizer moments, the step counter
and the training rng state, so `resume` continues bit-exactly.
"""

import logging
import time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .config_loader import Settings, build_settings, config_hash
from .dataset import DemoDataset, Normalizer, load_records
from .errors import ConfigError, NumericalError
from .optim import Adam
from .policy import DiffusionPolicy, resolve_variant
from .storage import load_checkpoint, save_checkpoint
from .utils import stable_id, stream_rng

logger = logging.getLogger("vgdp")


@dataclass
class TrainResult:
    checkpoint: str
    losses: list = field(default_factory=list)
    steps: int = 0

    @property
    def initial_loss(self) -> float:
        return self.losses[0] if self.losses else float("nan")

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


@dataclass
class LoadedPolicy:
    policy: DiffusionPolicy
    settings: Settings
    metadata: dict
    action_norm: Normalizer
    state_norm: Normalizer


def _batch_stats(batch: dict) -> str:
    parts = []
    for key in ("images", "points", "states", "actions"):
        arr = batch[key]
        parts.append(f"{key}: min={np.min(arr):.4g} max={np.max(arr):.4g} mean={np.mean(arr):.4g} "
                     f"finite={bool(np.all(np.isfinite(arr)))}")
    return "; ".join(parts)


def _checkpoint_arrays(policy: DiffusionPolicy, optimizer: Adam) -> "OrderedDict[str, np.ndarray]":
    arrays = OrderedDict(policy.state_dict())
    arrays.update(optimizer.state_arrays())
    return arrays


def _metadata(settings: Settings, policy: DiffusionPolicy, dataset: DemoDataset, seed: int, step: int,
              rng: np.random.Generator, losses: list) -> dict:
    return {
        "config": settings.resolved,
        "config_hash": config_hash(settings),
        "variant": policy.variant.name,
        "task": policy.task.name,
        "seed": int(seed),
        "step": int(step),
        "rng_state": rng.bit_generator.state,
        "normalization": {"action": dataset.action_norm.to_dict(), "state": dataset.state_norm.to_dict()},
        "losses": [float(x) for x in losses],
    }


def build_policy(settings: Settings, task_name: str, variant_name: str, seed: int) -> DiffusionPolicy:
    variant = resolve_variant(variant_name)
    init_rng = stream_rng(seed, stable_id("init"), stable_id(variant_name))
    return DiffusionPolicy(settings, settings.task(task_name), variant, init_rng)


def train_policy(store_path, settings: Settings, variant_name: str, seed: int, out_path,
                 steps: int = None, resume=None, records: list = None) -> TrainResult:
    """Optimize the denoising loss on the store's demos and write a checkpoint."""
    resolve_variant(variant_name)
    records = records if records is not None else load_records(store_path)
    dataset = DemoDataset(records, settings, seed)
    policy = build_policy(settings, dataset.task, variant_name, seed)
    settings = policy.settings
    opt_cfg = settings.optimizer
    optimizer = Adam(policy.named_parameters(), lr=opt_cfg.lr, betas=(opt_cfg.beta1, opt_cfg.beta2),
                     eps=opt_cfg.eps)
    rng = stream_rng(seed, stable_id("train"))
    total = settings.training.steps if steps is None else int(steps)
    batch_size = settings.training.batch_size
    log_every = settings.training.log_every
    checkpoint_every = settings.training.checkpoint_every

    start, losses = 0, []
    if resume is not None:
        arrays, meta = load_checkpoint(resume)
        if meta.get("variant") != variant_name or meta.get("task") != dataset.task:
            raise ConfigError(f"cannot resume {meta.get('variant')}/{meta.get('task')} "
                              f"as {variant_name}/{dataset.task}")
        if meta.get("config_hash") != config_hash(settings):
            raise ConfigError(f"{resume}: configuration hash differs from the current settings")
        policy.load_state_dict({k: v for k, v in arrays.items() if not k.startswith("optim.")})
        optimizer.load_state_arrays(arrays, meta["step"])
        rng.bit_generator.state = meta["rng_state"]
        start, losses = int(meta["step"]), list(meta.get("losses", []))
        logger.info(f"Resuming {variant_name} on {dataset.task} from step {start}")

    logger.info(f"Training {variant_name} on {dataset.task}: {total} steps, batch {batch_size}, "
                f"{policy.parameter_count()} parameters, seed={seed}")
    started = time.monotonic()
    for step in range(start, total):
        batch = dataset.sample(rng, batch_size)
        optimizer.zero_grad()
        try:
            loss = policy.loss(batch, rng)
            loss.backward()
            optimizer.step()
        except NumericalError as e:
            logger.error(f"Non-finite values at step {step} ({variant_name}, seed={seed}): {e}")
            raise NumericalError(f"training aborted at step {step}: {e}. Last batch: {_batch_stats(batch)}") from e
        losses.append(loss.item())
        if log_every and (step + 1) % log_every == 0:
            recent = np.mean(losses[-log_every:])
            logger.info(f"[{variant_name} seed={seed}] step {step + 1}/{total} loss={recent:.4f} "
                        f"({time.monotonic() - started:.0f}s)")
        if checkpoint_every and (step + 1) % checkpoint_every == 0 and step + 1 < total:
            save_checkpoint(out_path, _checkpoint_arrays(policy, optimizer),
                            _metadata(settings, policy, dataset, seed, step + 1, rng, losses))

    save_checkpoint(out_path, _checkpoint_arrays(policy, optimizer),
                    _metadata(settings, policy, dataset, seed, max(total, start), rng, losses))
    return TrainResult(checkpoint=str(out_path), losses=losses, steps=max(total, start))


def load_policy(path) -> LoadedPolicy:
    """Rebuild a policy from a checkpoint alone (its embedded configuration included)."""
    arrays, meta = load_checkpoint(path)
    try:
        settings = build_settings(meta["config"])
        policy = DiffusionPolicy(settings, settings.task(meta["task"]), resolve_variant(meta["variant"]),
                                 stream_rng(0))
        norm = meta["normalization"]
    except KeyError as e:
        raise ConfigError(f"{path}: checkpoint metadata lacks {e}") from None
    policy.load_state_dict({k: v for k, v in arrays.items() if not k.startswith("optim.")})
    policy.eval()
    return LoadedPolicy(policy, policy.settings, meta,
                        Normalizer.from_dict(norm["action"]), Normalizer.from_dict(norm["state"]))
