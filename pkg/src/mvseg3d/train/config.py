"""Training configuration for the three stages.

Desk-scale step counts stand in for the full-scale schedule; the full-scale
reference values live in ``FULL_SCALE_REFERENCE`` and are surfaced by the CLI
help text.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..losses import FinetuneLossWeights, PretrainLossWeights

STAGES = ("pretrain", "finetune", "semisup")
DTYPES = ("float32", "float64")

# Reference values for the full-scale setup this artifact shrinks from.
FULL_SCALE_REFERENCE = {
    "pretrain.base_lr": 5e-4,
    "pretrain.total_steps": 100_000,
    "finetune.base_lr": 3e-4,
    "finetune.total_epochs": 2500,
    "weight_decay": 0.1,
    "warmup_iters": 50,
    "batch_size": 2,
    "layerwise_decay": 0.75,
    "mask_ratio": 0.5,
    "window": 64,
    "overlap": 0.70,
}


@dataclass(frozen=True)
class TaskSwitches:
    """Which proxy objectives contribute to the pretraining loss."""

    rec: bool = True
    rot: bool = True
    con: bool = True
    mul: bool = True

    def enabled(self) -> tuple[str, ...]:
        return tuple(n for n in ("rec", "rot", "con", "mul") if getattr(self, n))


@dataclass(frozen=True)
class TrainConfig:
    stage: str = "pretrain"
    base_lr: float = 5e-4          # finetune/semisup default is 3e-4 (see for_stage)
    weight_decay: float = 0.1
    warmup_iters: int = 50
    total_steps: int = 200
    batch_size: int = 2
    layerwise_decay: float = 0.75  # finetune/semisup stages only
    mask_ratio: float = 0.5
    mask_patch: tuple[int, int, int] = (4, 4, 4)
    tasks: TaskSwitches = field(default_factory=TaskSwitches)
    pretrain_weights: PretrainLossWeights = field(default_factory=PretrainLossWeights)
    finetune_weights: FinetuneLossWeights = field(default_factory=FinetuneLossWeights)
    consistency_symmetric: bool = True
    temperature: float = 0.5
    label_ratio: float = 1.0       # semisup: labeled fraction of the training set
    base_epochs: int = 100         # semisup: supervised warm phase
    total_epochs: int = 130        # semisup: warm phase + pseudo-labeled phase
    refresh_every: int = 0         # semisup: pseudo-label refresh cadence (0 = once)
    pseudo_threshold: float | None = None
    grad_clip: float = 1.0
    seed: int = 0
    dtype: str = "float32"
    deterministic: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "mask_patch", tuple(int(p) for p in self.mask_patch))
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if not (0 <= self.warmup_iters < self.total_steps):
            raise ValueError(
                f"need 0 <= warmup_iters < total_steps, got {self.warmup_iters} "
                f"vs {self.total_steps}"
            )
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (0.0 <= self.mask_ratio < 1.0):
            raise ValueError("mask_ratio must lie in [0, 1)")
        if not (0.0 < self.label_ratio <= 1.0):
            raise ValueError("label_ratio must lie in (0, 1]")
        if not (0 < self.base_epochs <= self.total_epochs):
            raise ValueError("need 0 < base_epochs <= total_epochs")
        if self.layerwise_decay <= 0:
            raise ValueError("layerwise_decay must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {DTYPES}")

    @staticmethod
    def stage_default_lr(stage: str) -> float:
        return 5e-4 if stage == "pretrain" else 3e-4

    @property
    def uses_layerwise_lr(self) -> bool:
        return self.stage != "pretrain"
