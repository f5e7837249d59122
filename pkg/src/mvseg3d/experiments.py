"""Desk-scale comparative experiments: label efficiency, view fusion, proxy tasks.

This is the engine behind the acceptance checks and the `ablate` command:
build a fixed phantom corpus, pretrain with a chosen proxy-task subset,
fine-tune on a labeled fraction (optionally from a pretrained encoder), and
score single-view and fused predictions on the validation split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .infer import EvalCase, WindowPlan, dice, model_predictor, sliding_window
from .net import ModelConfig
from .net.checkpoint import transfer_encoder
from .train import TaskSwitches, TrainConfig, finetune_run, pretrain_run
from .voldata import (
    VIEWS,
    ViewSpec,
    Volume,
    apply_view_array,
    default_family,
    gen_phantom,
    invert_view_field,
    sample_phantom,
)
from . import rng as rng_mod

CANONICAL_VIEWS = tuple(ViewSpec(v, 0) for v in VIEWS)


@dataclass(frozen=True)
class CorpusSpec:
    n_train: int = 64
    n_val: int = 16
    shape: tuple[int, int, int] = (32, 32, 32)
    classes: int = 4
    noise_sigma: float = 0.05
    seed: int = 0


def build_corpus(spec: CorpusSpec, family: dict | None = None):
    """Deterministic phantom corpus: (train pairs, val EvalCases)."""
    fam = family or default_family(spec.shape, spec.classes, spec.noise_sigma)
    stream = rng_mod.stream(spec.seed, "data")
    train, val = [], []
    for i in range(spec.n_train):
        train.append(gen_phantom(sample_phantom(fam, seed=int(stream.integers(2**62)))))
    for i in range(spec.n_val):
        img, lab = gen_phantom(sample_phantom(fam, seed=int(stream.integers(2**62))))
        val.append(EvalCase(case_id=f"val{i:03d}", image=img, label=lab))
    return train, val


def labeled_subset(pairs, fraction: float, seed: int):
    """The labeled fraction of a training set, chosen deterministically."""
    n = max(1, round(fraction * len(pairs)))
    idx = rng_mod.stream(seed, "labels").choice(len(pairs), size=n, replace=False)
    chosen = sorted(int(i) for i in idx)
    labeled = [pairs[i] for i in chosen]
    rest = [pairs[i][0] for i in range(len(pairs)) if i not in set(chosen)]
    return labeled, rest


# Desk-scale experiment rates: short runs on tiny batches converge too slowly
# at the full-scale reference rates, so the comparative experiments run hotter.
PRETRAIN_LR = 5e-4
FINETUNE_LR = 1e-3


def pretrain_encoder(images, model_cfg: ModelConfig, tasks: TaskSwitches,
                     seed: int, steps: int = 500, lr: float = PRETRAIN_LR,
                     base_cfg: TrainConfig | None = None):
    """Masked multi-view pretraining; returns the trained state."""
    cfg = base_cfg or TrainConfig()
    cfg = TrainConfig(
        stage="pretrain", base_lr=lr, weight_decay=cfg.weight_decay,
        warmup_iters=min(50, max(1, steps // 10)), total_steps=steps,
        batch_size=cfg.batch_size, mask_ratio=cfg.mask_ratio,
        mask_patch=cfg.mask_patch, tasks=tasks, temperature=cfg.temperature,
        seed=seed, dtype="float32",
    )
    return pretrain_run(images, model_cfg, cfg)


def finetune_model(labeled, model_cfg: ModelConfig, seed: int, steps: int,
                   init_model=None, lr: float = FINETUNE_LR,
                   base_cfg: TrainConfig | None = None):
    """Supervised cross-view fine-tuning, optionally from a pretrained encoder."""
    cfg = base_cfg or TrainConfig()
    cfg = TrainConfig(
        stage="finetune", base_lr=lr, weight_decay=cfg.weight_decay,
        warmup_iters=min(30, max(1, steps // 8)), total_steps=steps,
        batch_size=cfg.batch_size, layerwise_decay=cfg.layerwise_decay,
        finetune_weights=cfg.finetune_weights,
        consistency_symmetric=cfg.consistency_symmetric,
        seed=seed, dtype="float32",
    )
    from .train import make_state, finetune_step
    from .train.loop import _select_batch

    state = make_state(model_cfg, cfg)
    if init_model is not None:
        transfer_encoder(init_model, state.model)
    for _ in range(cfg.total_steps):
        idx = _select_batch(state.rng["data"], len(labeled), cfg.batch_size)
        finetune_step([labeled[i] for i in idx], state)
    return state


def eval_views(model, val_cases, views=CANONICAL_VIEWS,
               plan: WindowPlan | None = None) -> dict:
    """Mean foreground Dice per single view and for the fused prediction.

    Per-view probability fields are computed once and reused for the fusion,
    so 'fused' is exactly the mean of the per-view canonical-frame fields.
    """
    plan = plan or WindowPlan(window=(model.config.input_size,) * 3)
    predict = model_predictor(model)
    classes = model.config.num_classes
    per_view_dice = {str(v): [] for v in views}
    fused_dice = []
    for case in val_cases:
        canon_fields = {}
        for spec in views:
            arr = apply_view_array(case.image.data, spec)
            probs = sliding_window(arr, predict, plan, classes)
            canon_fields[str(spec)] = invert_view_field(probs, spec)
        fused = sum(canon_fields.values()) / len(views)

        def fg_dice(label_data):
            pred = Volume(label_data.argmax(axis=0).astype(np.int64), kind="label",
                          classes=classes, spacing=case.label.spacing)
            return float(np.mean([dice(pred, case.label, c) for c in range(1, classes)]))

        for key, field_ in canon_fields.items():
            per_view_dice[key].append(fg_dice(field_))
        fused_dice.append(fg_dice(fused))
    result = {key: float(np.mean(vals)) for key, vals in per_view_dice.items()}
    result["fused"] = float(np.mean(fused_dice))
    result["mean_single"] = float(np.mean([result[str(v)] for v in views]))
    result["best_single"] = float(max(result[str(v)] for v in views))
    return result


@dataclass
class LabelEfficiencyResult:
    seed: int
    scratch: dict
    pretrained_all: dict
    pretrained_rec: dict


def label_efficiency_run(corpus: CorpusSpec, model_cfg: ModelConfig, seed: int,
                         label_fraction: float = 0.10, pretrain_steps: int = 500,
                         finetune_steps: int = 240, finetune_lr: float = 3e-4,
                         val_shape: tuple[int, int, int] = (48, 48, 48),
                         overlap: float = 0.70) -> LabelEfficiencyResult:
    """One seed of the pretraining-helps / fusion-helps / proxy-ablation trio.

    Pretrains on all training images (all four tasks, and reconstruction
    only), fine-tunes at the labeled fraction from scratch and from both
    pretrained encoders, and scores per-view plus fused Dice on a validation
    split larger than the window, so overlapping sliding windows and fusion
    are genuinely exercised.
    """
    train, _ = build_corpus(corpus)
    _, val = build_corpus(CorpusSpec(n_train=0, n_val=corpus.n_val, shape=val_shape,
                                     classes=corpus.classes,
                                     noise_sigma=corpus.noise_sigma,
                                     seed=corpus.seed + 1))
    plan = WindowPlan(window=(model_cfg.input_size,) * 3, overlap=overlap,
                      blend="gaussian")
    images = [img for img, _ in train]
    labeled, _ = labeled_subset(train, label_fraction, seed=corpus.seed)

    pre_all = pretrain_encoder(images, model_cfg, TaskSwitches(), seed=seed,
                               steps=pretrain_steps)
    pre_rec = pretrain_encoder(images, model_cfg,
                               TaskSwitches(rec=True, rot=False, con=False, mul=False),
                               seed=seed, steps=pretrain_steps)

    ft_scratch = finetune_model(labeled, model_cfg, seed=seed, steps=finetune_steps,
                                lr=finetune_lr)
    ft_all = finetune_model(labeled, model_cfg, seed=seed, steps=finetune_steps,
                            init_model=pre_all.model, lr=finetune_lr)
    ft_rec = finetune_model(labeled, model_cfg, seed=seed, steps=finetune_steps,
                            init_model=pre_rec.model, lr=finetune_lr)

    return LabelEfficiencyResult(
        seed=seed,
        scratch=eval_views(ft_scratch.model, val, plan=plan),
        pretrained_all=eval_views(ft_all.model, val, plan=plan),
        pretrained_rec=eval_views(ft_rec.model, val, plan=plan),
    )
