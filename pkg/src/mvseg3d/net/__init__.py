"""The learnable components: encoder, cross-view decoder, pretraining heads."""

from .config import PLACEMENTS, ModelConfig
from .model import FeaturePyramid, MultiViewModel, cross_view_attention
from .checkpoint import (
    CheckpointError,
    ChecksumError,
    ConfigMismatchError,
    load_into,
    load_weights,
    save_weights,
)

__all__ = [
    "ModelConfig",
    "PLACEMENTS",
    "MultiViewModel",
    "FeaturePyramid",
    "cross_view_attention",
    "save_weights",
    "load_weights",
    "load_into",
    "CheckpointError",
    "ChecksumError",
    "ConfigMismatchError",
]
