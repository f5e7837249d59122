"""Train-state checkpointing: bit-exact save/resume of a whole run.

Everything needed to reproduce the next step lands in one container file:
parameters and optimizer moments as float64 payloads (lossless for float32
training too), plus step counter, configs, RNG stream states, the loss trace,
and lineage.
"""

from __future__ import annotations

from dataclasses import asdict

import numpy as np

from .. import rng as rng_mod
from ..container import read_container, write_container
from ..losses import FinetuneLossWeights, PretrainLossWeights
from ..net import ModelConfig
from .config import TaskSwitches, TrainConfig
from .loop import TrainState, make_state

TRAIN_STATE_FORMAT = "mvseg3d-train-state"


def train_config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    d["tasks"] = TaskSwitches(**d["tasks"])
    d["pretrain_weights"] = PretrainLossWeights(**d["pretrain_weights"])
    d["finetune_weights"] = FinetuneLossWeights(**d["finetune_weights"])
    return TrainConfig(**d)


def save_checkpoint(state: TrainState, path) -> None:
    tensors: dict[str, np.ndarray] = {}
    for key, arr in state.model.state_arrays().items():
        tensors[f"param.{key}"] = arr.astype("<f8")
    for key, arr in state.opt.state_arrays().items():
        tensors[f"opt.{key}"] = arr.astype("<f8")
    meta = {
        "format": TRAIN_STATE_FORMAT,
        "version": 1,
        "step": state.step,
        "opt_t": state.opt.t,
        "model_config": asdict(state.model_cfg),
        "train_config": asdict(state.cfg),
        "rng": {name: rng_mod.get_state(gen) for name, gen in state.rng.items()},
        "trace": state.trace,
        "lineage": state.lineage,
    }
    write_container(path, meta, tensors)


def load_encoder_weights(model, path) -> int:
    """Initialize a model's encoder from either checkpoint format.

    Accepts a weight container or a train-state checkpoint; copies encoder
    tensors with matching names and shapes, returns how many matched.
    """
    from ..net.checkpoint import WEIGHTS_FORMAT, load_into

    meta, tensors = read_container(path)
    if meta.get("format") == WEIGHTS_FORMAT:
        return load_into(model, path, encoder_only=True)
    if meta.get("format") != TRAIN_STATE_FORMAT:
        raise ValueError(f"{path}: not a known checkpoint format")
    state = model.state_arrays()
    matched = 0
    for key, value in tensors.items():
        if not key.startswith("param.encoder."):
            continue
        name = key[len("param."):]
        if name in state and tuple(state[name].shape) == tuple(value.shape):
            state[name] = value
            matched += 1
    model.load_state_arrays(state)
    return matched


def load_checkpoint(path) -> TrainState:
    """Rebuild a TrainState; resuming reproduces the original run bit-exactly."""
    meta, tensors = read_container(path)
    if meta.get("format") != TRAIN_STATE_FORMAT:
        raise ValueError(f"{path}: not a train-state checkpoint")
    model_cfg = ModelConfig(**meta["model_config"])
    cfg = train_config_from_dict(meta["train_config"])
    state = make_state(model_cfg, cfg)
    state.step = int(meta["step"])
    params = {k[len("param."):]: v for k, v in tensors.items() if k.startswith("param.")}
    state.model.load_state_arrays(params)
    opt_arrays = {k[len("opt."):]: v for k, v in tensors.items() if k.startswith("opt.")}
    state.opt.load_state_arrays(opt_arrays, t=int(meta["opt_t"]))
    for name, gen_state in meta["rng"].items():
        rng_mod.set_state(state.rng[name], gen_state)
    state.trace = list(meta["trace"])
    state.lineage = list(meta["lineage"]) + [f"resumed at step {state.step}"]
    return state
