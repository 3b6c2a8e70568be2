"""Run configuration: one flat JSON document shared by every subcommand."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .diffusion.model import COND_MODES
from .diffusion.schedule import OBJECTIVES

CONFIG_VERSION = 1

# fields stored as JSON arrays
_TUPLES = ("track_meshes", "objectives", "steps")


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run needs, validated before any work starts.

    Keys are flat and mirror the CLI flag names (dashes for underscores),
    so a config file and a flag list describe the same run.
    """

    seed: int = 0
    mesh_dir: str = ""                  # empty -> generate a primitive corpus
    dataset_root: str = "dataset"
    report_dir: str = "reports"
    resolution: int = 256
    grid: int = 16                      # light samples per pixel = grid^2
    train_count: int = 2000
    mesh_count: int = 40                # generated corpus size for `forge`
    track_meshes: tuple = (50, 15, 15)  # held-out pool sizes per track
    objective: str = "rf"
    cond_mode: str = "scalar"
    include_intensity: bool = False
    iterations: int = 5000
    batch_size: int = 16
    lr: float = 1e-4
    objectives: tuple = OBJECTIVES      # sweep grid
    steps: tuple = (1, 2, 4, 8, 20)     # sweep grid
    sample_seeds: int = 10              # sweep grid
    workers: int = 0                    # 0 -> UMBRA_THREADS or cpu count

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError(f"resolution must be >= 1, got {self.resolution}")
        if self.grid < 1:
            raise ValueError(f"grid must be >= 1, got {self.grid}")
        if self.train_count < 1 or self.mesh_count < 1:
            raise ValueError("train_count and mesh_count must be >= 1")
        if len(self.track_meshes) != 3 or any(n < 1 for n in self.track_meshes):
            raise ValueError(
                f"track_meshes needs three positive counts, got {self.track_meshes}"
            )
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.cond_mode not in COND_MODES:
            raise ValueError(f"cond_mode must be one of {COND_MODES}")
        if self.iterations < 1 or self.batch_size < 1:
            raise ValueError("iterations and batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        bad = [o for o in self.objectives if o not in OBJECTIVES]
        if bad or not self.objectives:
            raise ValueError(f"objectives must be a non-empty subset of {OBJECTIVES}")
        if not self.steps or any(k < 1 for k in self.steps):
            raise ValueError(f"steps must be positive, got {self.steps}")
        if self.sample_seeds < 1:
            raise ValueError(f"sample_seeds must be >= 1, got {self.sample_seeds}")
        if self.workers < 0:
            raise ValueError(f"workers must be >= 0, got {self.workers}")

    def to_dict(self):
        out = {"version": CONFIG_VERSION}
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            out[field.name] = list(value) if field.name in _TUPLES else value
        return out


def config_from_dict(data) -> RunConfig:
    """Build a RunConfig from a parsed JSON document, rejecting stray keys."""
    data = dict(data)
    version = data.pop("version", None)
    if version != CONFIG_VERSION:
        raise ValueError(f"config version must be {CONFIG_VERSION}, got {version!r}")
    names = {field.name for field in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    for key in _TUPLES:
        if key in data:
            data[key] = tuple(data[key])
    return RunConfig(**data)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as handle:
        return config_from_dict(json.load(handle))


def save_config(config: RunConfig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")


def merge_flags(config: RunConfig, overrides) -> RunConfig:
    """Overlay explicit flag values on a config; None means "not given"."""
    names = {field.name for field in dataclasses.fields(RunConfig)}
    unknown = sorted(k for k in overrides if k not in names)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    live = {k: (tuple(v) if k in _TUPLES and v is not None else v)
            for k, v in overrides.items() if v is not None}
    return dataclasses.replace(config, **live) if live else config
