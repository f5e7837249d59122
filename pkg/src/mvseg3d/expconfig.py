"""Experiment configuration: one JSON document with strict key checking.

Every field is defaulted; unknown keys are rejected with their full path
(silent typos are the classic failure mode of experiment harnesses). The
resolved config (defaults merged with overrides) is written back into the run
directory, and reloading it reproduces the run at a fixed seed.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .losses import FinetuneLossWeights, PretrainLossWeights
from .net import ModelConfig
from .train import TaskSwitches, TrainConfig
from .train.config import FULL_SCALE_REFERENCE


class ConfigError(ValueError):
    """Malformed experiment configuration."""


@dataclass(frozen=True)
class DataConfig:
    manifest: str | None = None      # gen-data manifest; None generates in memory
    n_train: int = 64
    n_val: int = 16
    shape: tuple[int, int, int] = (32, 32, 32)
    classes: int = 4
    noise_sigma: float = 0.05
    recipe: str | None = None        # phantom family JSON; None uses the built-in
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if self.n_train < 0 or self.n_val < 0:
            raise ConfigError("n_train and n_val must be >= 0")
        if self.classes < 2:
            raise ConfigError("classes must be >= 2")


@dataclass(frozen=True)
class InferConfig:
    window: tuple[int, int, int] = (32, 32, 32)
    overlap: float = 0.70
    blend: str = "gaussian"
    views: tuple[str, ...] = ("axial:0", "coronal:0", "sagittal:0")
    hd_mode: str = "max"
    fusion: str = "mean"

    def __post_init__(self) -> None:
        object.__setattr__(self, "window", tuple(int(w) for w in self.window))
        object.__setattr__(self, "views", tuple(str(v) for v in self.views))


@dataclass(frozen=True)
class ReportConfig:
    per_view: bool = False
    plots: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=lambda: ModelConfig(num_classes=4))
    train: TrainConfig = field(default_factory=TrainConfig)
    infer: InferConfig = field(default_factory=InferConfig)
    report: ReportConfig = field(default_factory=ReportConfig)


_NESTED = {
    "train.tasks": TaskSwitches,
    "train.pretrain_weights": PretrainLossWeights,
    "train.finetune_weights": FinetuneLossWeights,
}

_SECTIONS = {
    "data": DataConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "infer": InferConfig,
    "report": ReportConfig,
}


def _build(dc_type, overrides: dict, path: str):
    known = {f.name: f for f in dataclasses.fields(dc_type)}
    kwargs = {}
    for key, value in overrides.items():
        where = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(f"unknown config key {where!r}")
        if where in _NESTED:
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be an object")
            kwargs[key] = _build(_NESTED[where], value, where)
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return dc_type(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config section {path or '<root>'}: {exc}") from exc


def from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("experiment config must be a JSON object")
    sections = {}
    for key, value in doc.items():
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config key {key!r} (sections: {sorted(_SECTIONS)})")
        if not isinstance(value, dict):
            raise ConfigError(f"section {key!r} must be an object")
        sections[key] = _build(_SECTIONS[key], value, key)
    return ExperimentConfig(**sections)


def load(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    return from_dict(doc)


def to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def save(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def with_overrides(cfg: ExperimentConfig, **train_overrides) -> ExperimentConfig:
    """Replace fields on the train section (stage, seed, deterministic, ...)."""
    return dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, **train_overrides))


def reference_text() -> str:
    """Config key reference for --help: every key, its default, and the
    full-scale reference value where one exists."""
    lines = ["configuration keys (JSON sections -> keys):"]
    for section, dc_type in _SECTIONS.items():
        for f in dataclasses.fields(dc_type):
            if f.default is not dataclasses.MISSING:
                default = f.default
            elif f.default_factory is not dataclasses.MISSING:  # type: ignore[misc]
                default = f.default_factory()  # type: ignore[misc]
            else:
                default = "<required>"
            lines.append(f"  {section}.{f.name} = {default!r}")
    lines.append("")
    lines.append("full-scale reference values (this package runs desk-scale):")
    for key, value in FULL_SCALE_REFERENCE.items():
        lines.append(f"  {key} = {value!r}")
    return "\n".join(lines)
