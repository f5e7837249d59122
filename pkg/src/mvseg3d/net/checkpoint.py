"""Weight checkpoints: f32 tensor container with the config embedded."""

from __future__ import annotations

from dataclasses import asdict

import numpy as np

from ..container import ChecksumError as _ContainerChecksumError
from ..container import ContainerError, read_container, write_container
from .config import ModelConfig

WEIGHTS_FORMAT = "mvseg3d-weights"


class CheckpointError(Exception):
    """Unreadable or incompatible weight checkpoint."""


class ChecksumError(CheckpointError):
    pass


class ConfigMismatchError(CheckpointError):
    pass


def config_from_dict(d: dict) -> ModelConfig:
    return ModelConfig(**d)


def save_weights(model, path) -> None:
    """Write the model's full parameter registry as little-endian f32."""
    tensors = {k: v.astype("<f4") for k, v in model.state_arrays().items()}
    meta = {"format": WEIGHTS_FORMAT, "version": 1, "config": asdict(model.config)}
    write_container(path, meta, tensors)


def load_weights(path, expected: ModelConfig | None = None) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    """Read a weight checkpoint, verifying checksums and (optionally) the config."""
    try:
        meta, tensors = read_container(path)
    except _ContainerChecksumError as exc:
        raise ChecksumError(str(exc)) from exc
    except ContainerError as exc:
        raise CheckpointError(str(exc)) from exc
    if meta.get("format") != WEIGHTS_FORMAT:
        raise CheckpointError(f"{path}: not a weight checkpoint (format={meta.get('format')!r})")
    cfg = config_from_dict(meta["config"])
    if expected is not None and cfg != expected:
        raise ConfigMismatchError(
            f"{path}: checkpoint config {cfg} does not match expected {expected}"
        )
    return cfg, tensors


def load_into(model, path, encoder_only: bool = False) -> int:
    """Load checkpoint tensors into a model; returns how many tensors matched.

    Full loads require an identical config. ``encoder_only`` loads the
    intersection of encoder tensors with matching shapes (used to initialize
    fine-tuning from a pretrained checkpoint).
    """
    if encoder_only:
        _, tensors = load_weights(path)
        state = model.state_arrays()
        matched = 0
        for key, value in tensors.items():
            if not key.startswith("encoder."):
                continue
            if key in state and tuple(state[key].shape) == tuple(value.shape):
                state[key] = value
                matched += 1
        model.load_state_arrays(state)
        return matched
    _, tensors = load_weights(path, expected=model.config)
    model.load_state_arrays(tensors)
    return len(tensors)


def transfer_encoder(src, dst) -> int:
    """Copy matching encoder tensors between in-memory models; returns count."""
    src_state = src.state_arrays()
    dst_state = dst.state_arrays()
    matched = 0
    for key, value in src_state.items():
        if key.startswith("encoder.") and key in dst_state \
                and tuple(dst_state[key].shape) == tuple(value.shape):
            dst_state[key] = value
            matched += 1
    dst.load_state_arrays(dst_state)
    return matched
