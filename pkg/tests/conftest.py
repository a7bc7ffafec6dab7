"""Shared fixtures: a tiny configuration derived from the shipped settings, and small stores."""

from pathlib import Path

import numpy as np
import pytest
import yaml

from src.config_loader import load_settings
from src.dataset import collect_demos, load_records
from src.sim import RandomizationConfig, Simulator

ROOT = Path(__file__).resolve().parent.parent
SETTINGS_PATH = ROOT / "config" / "settings.yaml"

TINY = {
    "encoder": {
        "image_resolution": 16,
        "image_channels": [4, 4, 8, 8, 8],
        "image_feature_dim": 8,
        "point_count": 32,
        "point_hidden": [8, 16],
        "point_feature_dim": 8,
        "state_hidden": 8,
        "state_feature_dim": 8,
    },
    "fusion": {"shared_dim": 16, "token_count": 4, "head_count": 2},
    "diffusion": {"steps": 10, "horizon": 4, "action_steps": 2, "time_embed_dim": 8,
                  "hidden_dim": 32, "hidden_layers": 2},
    "optimizer": {"lr": 1.0e-3},
    "training": {"steps": 4, "batch_size": 4, "log_every": 2},
}


def write_tiny_config(directory: Path) -> Path:
    raw = yaml.safe_load(SETTINGS_PATH.read_text())
    desk = raw["presets"]["desk"]
    for section, values in TINY.items():
        desk[section].update(values)
    raw["logging"]["file"] = str(directory / "logs" / "vgdp.log")
    raw["evaluation"]["demos"] = 2
    raw["evaluation"]["trials"] = 2
    path = directory / "tiny.yaml"
    path.write_text(yaml.safe_dump(raw, sort_keys=False))
    return path


@pytest.fixture
def tiny_config(tmp_path) -> Path:
    return write_tiny_config(tmp_path)


@pytest.fixture
def tiny_settings(tiny_config):
    return load_settings(str(tiny_config))


@pytest.fixture
def desk_settings():
    return load_settings(str(SETTINGS_PATH))


@pytest.fixture
def sim(tiny_settings):
    return Simulator(tiny_settings)


@pytest.fixture
def reach_store(tiny_settings, tmp_path) -> Path:
    path = tmp_path / "demos" / "reach"
    collect_demos(tiny_settings, "reach_target", "L0", 2, path, seed=0)
    return path


@pytest.fixture
def reach_records(reach_store) -> list:
    return load_records(reach_store)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def episode(sim, task: str, level: str = "L0", split: str = "iid", seed: int = 0):
    return sim.make_episode(task, RandomizationConfig(level, split), np.random.default_rng(seed))
