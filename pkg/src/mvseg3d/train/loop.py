"""Optimization loops: multi-view pretraining, cross-view fine-tuning,
semi-supervised pseudo-labeling.

All randomness flows through named numpy streams held by the TrainState
("data" for batch selection, "view" for view-pair sampling, "mask" for mask
seeds), so fixed seeds give bit-identical trajectories in single-threaded
double precision.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .. import rng as rng_mod
from ..losses import (
    loss_con,
    loss_consistency,
    loss_dicece,
    loss_finetune,
    loss_mul,
    loss_pretrain,
    loss_rec,
    loss_rot,
)
from ..net import ModelConfig, MultiViewModel
from ..voldata import (
    VIEWS,
    MaskSpec,
    ViewSpec,
    Volume,
    apply_mask,
    apply_view,
    invert_view_field,
    make_mask,
)
from .adamw import AdamW
from .config import TrainConfig
from .schedule import layerwise_scales, lr_at

PRETRAIN_COLUMNS = ("step", "lr", "total", "rec", "rot", "con", "mul")
FINETUNE_COLUMNS = ("step", "lr", "total", "dicece", "mc")


@dataclass
class TrainState:
    model: MultiViewModel
    opt: AdamW
    model_cfg: ModelConfig
    cfg: TrainConfig
    step: int = 0
    rng: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    lineage: list = field(default_factory=list)

    @property
    def dtype(self):
        return torch.float64 if self.cfg.dtype == "float64" else torch.float32


def make_state(model_cfg: ModelConfig, cfg: TrainConfig) -> TrainState:
    if cfg.deterministic:
        torch.set_num_threads(1)
    model = MultiViewModel(model_cfg, init_seed=cfg.seed)
    if cfg.dtype == "float64":
        model.double()
    scales = None
    if cfg.uses_layerwise_lr:
        names = [n for n, _ in model.named_parameters()]
        scales = layerwise_scales(names, model_cfg.stages, cfg.layerwise_decay)
    opt = AdamW(dict(model.named_parameters()), weight_decay=cfg.weight_decay,
                lr_scales=scales)
    streams = {name: rng_mod.stream(cfg.seed, name) for name in ("data", "view", "mask")}
    return TrainState(model=model, opt=opt, model_cfg=model_cfg, cfg=cfg, rng=streams,
                      lineage=[f"init seed={cfg.seed}"])


def sample_view_pair(gen: np.random.Generator) -> tuple[ViewSpec, ViewSpec]:
    """Two specs with distinct axis permutations, quarter-turns uniform."""
    views = gen.choice(len(VIEWS), size=2, replace=False)
    ks = gen.integers(0, 4, size=2)
    return (ViewSpec(VIEWS[int(views[0])], int(ks[0])),
            ViewSpec(VIEWS[int(views[1])], int(ks[1])))


# --- pretraining -------------------------------------------------------------


def pretrain_forward(state: TrainState, batch: list[Volume], spec_pairs=None):
    """Sample view pairs and masks, run the encoder heads, return loss parts.

    Views and masks are drawn independently of the task switches so that
    disabling a task never shifts the sampled geometry.
    """
    cfg = state.cfg
    model = state.model
    if spec_pairs is None:
        spec_pairs = [sample_view_pair(state.rng["view"]) for _ in batch]
    masked, targets, ks = [], [], []
    for vol, (s_i, s_j) in zip(batch, spec_pairs):
        for spec in (s_i, s_j):
            viewed = apply_view(vol, spec)
            mask_seed = int(state.rng["mask"].integers(0, 2**63 - 1))
            mask = make_mask(viewed.shape, MaskSpec(cfg.mask_patch, cfg.mask_ratio, mask_seed))
            masked.append(apply_mask(viewed, mask, fill=0.0).data)
            targets.append(viewed.data)
            ks.append(spec.k)
    x = torch.from_numpy(np.stack(masked)).unsqueeze(1).to(state.dtype)
    tgt = torch.from_numpy(np.stack(targets)).unsqueeze(1).to(state.dtype)
    pyramid = model.encode(x)
    y_rec, y_rot, y_con = model.heads(pyramid)
    zero = torch.zeros((), dtype=state.dtype)
    tasks = cfg.tasks
    parts = {
        "rec": loss_rec(tgt, y_rec) if tasks.rec else zero,
        "rot": loss_rot(y_rot, ks) if tasks.rot else zero,
        "con": (loss_con(y_con, [i ^ 1 for i in range(len(ks))], t=cfg.temperature)
                if tasks.con else zero),
    }
    if tasks.mul:
        muls = [
            loss_mul(y_rec[2 * b, 0], y_rec[2 * b + 1, 0], s_i, s_j)
            for b, (s_i, s_j) in enumerate(spec_pairs)
        ]
        parts["mul"] = torch.stack(muls).mean()
    else:
        parts["mul"] = zero
    return parts


def pretrain_step(batch: list[Volume], state: TrainState) -> dict:
    """One optimizer step of masked multi-view pretraining."""
    cfg = state.cfg
    lr = lr_at(state.step + 1, cfg.base_lr, cfg.warmup_iters, cfg.total_steps)
    if not cfg.tasks.enabled():
        state.step += 1
        row = {"step": state.step, "lr": lr, "total": 0.0,
               "rec": 0.0, "rot": 0.0, "con": 0.0, "mul": 0.0}
        state.trace.append(row)
        return row
    if cfg.tasks.con and 2 * len(batch) < 4:
        raise ValueError("contrastive task needs a batch of at least 2 volumes")
    parts = pretrain_forward(state, batch)
    total = loss_pretrain(
        (parts["rec"], parts["rot"], parts["con"], parts["mul"]), cfg.pretrain_weights
    )
    state.opt.zero_grad()
    total.backward()
    state.opt.clip_gradients(cfg.grad_clip)
    state.opt.step(lr)
    state.step += 1
    row = {"step": state.step, "lr": lr, "total": float(total.detach()),
           **{k: float(v.detach()) for k, v in parts.items()}}
    state.trace.append(row)
    return row


# --- fine-tuning --------------------------------------------------------------


def finetune_forward(state: TrainState, batch: list[tuple[Volume, Volume]],
                     spec_pairs=None):
    """Two-view supervised forward: per-view DiceCE plus cross-view consistency."""
    cfg = state.cfg
    model = state.model
    if spec_pairs is None:
        spec_pairs = [sample_view_pair(state.rng["view"]) for _ in batch]
    xs_i, xs_j, ys_i, ys_j = [], [], [], []
    for (image, label), (s_i, s_j) in zip(batch, spec_pairs):
        xs_i.append(apply_view(image, s_i).data)
        xs_j.append(apply_view(image, s_j).data)
        ys_i.append(apply_view(label, s_i).data)
        ys_j.append(apply_view(label, s_j).data)
    n = len(batch)
    x = torch.from_numpy(np.stack(xs_i + xs_j)).unsqueeze(1).to(state.dtype)
    pyramid = model.encode(x)
    p_i = type(pyramid)(levels=tuple(l[:n] for l in pyramid.levels))
    p_j = type(pyramid)(levels=tuple(l[n:] for l in pyramid.levels))
    logits_i, logits_j = model.decode_pair(p_i, p_j)

    dice_i = torch.stack([
        loss_dicece(logits_i[b], torch.from_numpy(ys_i[b]).long()) for b in range(n)
    ]).mean()
    dice_j = torch.stack([
        loss_dicece(logits_j[b], torch.from_numpy(ys_j[b]).long()) for b in range(n)
    ]).mean()

    w = cfg.finetune_weights
    if w.beta_mc == 0.0 or w.consistency_kind == "none":
        mc = torch.zeros((), dtype=state.dtype)
    else:
        terms = []
        for b, (s_i, s_j) in enumerate(spec_pairs):
            canon_i = invert_view_field(logits_i[b], s_i)
            canon_j = invert_view_field(logits_j[b], s_j)
            terms.append(loss_consistency(canon_i, canon_j, w.consistency_kind,
                                          symmetric=cfg.consistency_symmetric))
        mc = torch.stack(terms).mean()
    return [dice_i, dice_j], mc


def finetune_step(batch: list[tuple[Volume, Volume]], state: TrainState,
                  spec_pairs=None) -> dict:
    """One optimizer step of cross-view fine-tuning with layer-wise rates."""
    cfg = state.cfg
    for image, label in batch:
        if image.shape != label.shape:
            raise ValueError(
                f"volume/label shape mismatch: {image.shape} vs {label.shape}"
            )
    dice_terms, mc = finetune_forward(state, batch, spec_pairs=spec_pairs)
    total = loss_finetune(dice_terms, mc, cfg.finetune_weights)
    state.opt.zero_grad()
    total.backward()
    state.opt.clip_gradients(cfg.grad_clip)
    lr = lr_at(state.step + 1, cfg.base_lr, cfg.warmup_iters, cfg.total_steps)
    state.opt.step(lr)
    state.step += 1
    row = {"step": state.step, "lr": lr, "total": float(total.detach()),
           "dicece": float(torch.stack(dice_terms).mean().detach()),
           "mc": float(mc.detach())}
    state.trace.append(row)
    return row


# --- run drivers ---------------------------------------------------------------


def _select_batch(gen: np.random.Generator, n: int, batch_size: int) -> list[int]:
    take = min(batch_size, n)
    return [int(i) for i in gen.choice(n, size=take, replace=False)]


def pretrain_run(images: list[Volume], model_cfg: ModelConfig, cfg: TrainConfig,
                 out_dir=None, init_from=None) -> TrainState:
    state = make_state(model_cfg, cfg)
    if init_from is not None:
        from .state import load_encoder_weights
        matched = load_encoder_weights(state.model, init_from)
        state.lineage.append(f"encoder init from {init_from} ({matched} tensors)")
    for _ in range(cfg.total_steps):
        idx = _select_batch(state.rng["data"], len(images), cfg.batch_size)
        pretrain_step([images[i] for i in idx], state)
    if out_dir is not None:
        finalize_run_dir(state, out_dir)
    return state


def finetune_run(pairs: list[tuple[Volume, Volume]], model_cfg: ModelConfig,
                 cfg: TrainConfig, out_dir=None, init_from=None,
                 steps: int | None = None, state: TrainState | None = None) -> TrainState:
    if state is None:
        state = make_state(model_cfg, cfg)
        if init_from is not None:
            from .state import load_encoder_weights
            matched = load_encoder_weights(state.model, init_from)
            state.lineage.append(f"encoder init from {init_from} ({matched} tensors)")
    for _ in range(cfg.total_steps if steps is None else steps):
        idx = _select_batch(state.rng["data"], len(pairs), cfg.batch_size)
        finetune_step([pairs[i] for i in idx], state)
    if out_dir is not None:
        finalize_run_dir(state, out_dir)
    return state


def make_pseudo_labels(model: MultiViewModel, volumes: list[Volume], num_classes: int,
                       threshold: float | None = None,
                       fusion: str = "mean") -> list[tuple[Volume, Volume]]:
    """Fused multi-view predictions as training targets for unlabeled volumes.

    Fusion runs over the three canonical views; with a threshold set, volumes
    whose mean top-class probability falls below it are skipped.
    """
    from ..infer import WindowPlan, model_predictor, multiview_predict

    views = [ViewSpec(v, 0) for v in VIEWS]
    plan = WindowPlan(window=(model.config.input_size,) * 3)
    predict = model_predictor(model)
    out = []
    for vol in volumes:
        label, probs = multiview_predict(vol, predict, plan, views, num_classes, fusion)
        if threshold is not None and float(probs.max(axis=0).mean()) < threshold:
            continue
        out.append((vol, label))
    return out


def semisup_run(labeled: list[tuple[Volume, Volume]], unlabeled: list[Volume],
                model_cfg: ModelConfig, cfg: TrainConfig, out_dir=None,
                init_from=None) -> TrainState:
    """Supervised warm phase, then fine-tuning on labeled + pseudo-labeled data.

    Pseudo-labels are regenerated every ``refresh_every`` epochs of the second
    phase (0 = generate once). With no unlabeled volumes this is plain
    fine-tuning for ``total_epochs`` epochs.
    """
    if not labeled:
        raise ValueError("semisup needs a non-empty labeled set")
    state = make_state(model_cfg, cfg)
    if init_from is not None:
        from .state import load_encoder_weights
        matched = load_encoder_weights(state.model, init_from)
        state.lineage.append(f"encoder init from {init_from} ({matched} tensors)")

    def run_epochs(pool, epochs):
        steps_per_epoch = math.ceil(len(pool) / cfg.batch_size)
        for _ in range(epochs * steps_per_epoch):
            idx = _select_batch(state.rng["data"], len(pool), cfg.batch_size)
            finetune_step([pool[i] for i in idx], state)

    run_epochs(labeled, cfg.base_epochs)
    phase2 = cfg.total_epochs - cfg.base_epochs
    if not unlabeled:
        run_epochs(labeled, phase2)
    else:
        chunk = cfg.refresh_every if cfg.refresh_every > 0 else phase2
        done = 0
        while done < phase2:
            pseudo = make_pseudo_labels(state.model, unlabeled, model_cfg.num_classes,
                                        threshold=cfg.pseudo_threshold)
            state.lineage.append(f"pseudo labels: {len(pseudo)}/{len(unlabeled)} kept")
            epochs = min(chunk, phase2 - done)
            run_epochs(labeled + pseudo, epochs)
            done += epochs
    if out_dir is not None:
        finalize_run_dir(state, out_dir)
    return state


# --- run directory --------------------------------------------------------------


def trace_columns(stage: str) -> tuple[str, ...]:
    return PRETRAIN_COLUMNS if stage == "pretrain" else FINETUNE_COLUMNS


def write_trace_csv(state: TrainState, path) -> None:
    columns = trace_columns(state.cfg.stage)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in state.trace:
            writer.writerow([
                row["step"] if c == "step" else repr(float(row[c])) for c in columns
            ])


def finalize_run_dir(state: TrainState, out_dir) -> None:
    from .state import save_checkpoint

    os.makedirs(out_dir, exist_ok=True)
    write_trace_csv(state, os.path.join(out_dir, "trace.csv"))
    save_checkpoint(state, os.path.join(out_dir, f"ckpt-{state.step}"))
