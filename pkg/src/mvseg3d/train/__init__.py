"""Optimization loops, schedules, and train-state checkpointing."""

from .adamw import AdamW, decays
from .config import FULL_SCALE_REFERENCE, TaskSwitches, TrainConfig
from .loop import (
    TrainState,
    finetune_forward,
    finetune_run,
    finetune_step,
    make_pseudo_labels,
    make_state,
    pretrain_forward,
    pretrain_run,
    pretrain_step,
    sample_view_pair,
    semisup_run,
    write_trace_csv,
)
from .schedule import layerwise_scale, layerwise_scales, lr_at
from .state import (load_checkpoint, load_encoder_weights, save_checkpoint,
                    train_config_from_dict)

__all__ = [
    "AdamW",
    "decays",
    "TrainConfig",
    "TaskSwitches",
    "FULL_SCALE_REFERENCE",
    "TrainState",
    "make_state",
    "sample_view_pair",
    "pretrain_forward",
    "pretrain_step",
    "pretrain_run",
    "finetune_forward",
    "finetune_step",
    "finetune_run",
    "semisup_run",
    "make_pseudo_labels",
    "write_trace_csv",
    "lr_at",
    "layerwise_scale",
    "layerwise_scales",
    "save_checkpoint",
    "load_checkpoint",
    "load_encoder_weights",
    "train_config_from_dict",
]
