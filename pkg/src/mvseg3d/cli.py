"""Command-line entry point.

Subcommands: gen-data, pretrain, finetune, semisup, eval, ablate,
inspect-ckpt. Global flags: --config, --seed, --out, --deterministic,
--overwrite. The env var SWINMM_CACHE names the dataset cache root used when
gen-data gets no --out.

Every training command writes a run directory: config.json (the resolved
configuration), trace.csv (step, lr, loss components), and a final
ckpt-<step> file. Commands refuse to clobber an existing non-empty output
directory unless --overwrite is given.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import expconfig
from . import rng as rng_mod
from .expconfig import ConfigError, ExperimentConfig
from .infer import EvalCase, MetricsReport, WindowPlan, evaluate, model_predictor, truth_oracle
from .net import ModelConfig, MultiViewModel
from .train import (
    TaskSwitches,
    TrainConfig,
    finetune_run,
    pretrain_run,
    semisup_run,
)
from .voldata import (
    LABEL,
    ViewSpec,
    gen_phantom,
    read_volume,
    sample_phantom,
    write_volume,
)
from .voldata.phantom import default_family, load_family

CACHE_ENV = "SWINMM_CACHE"

MASK_RATIO_GRID = (0.25, 0.5, 0.75)
LABEL_RATIO_GRID = (0.10, 0.30, 0.50, 0.70, 0.90, 1.00)
PROXY_GRID = (
    ("none", TaskSwitches(False, False, False, False)),
    ("rec", TaskSwitches(True, False, False, False)),
    ("rot+con", TaskSwitches(False, True, True, False)),
    ("rec+mul", TaskSwitches(True, False, False, True)),
    ("rec+rot+con", TaskSwitches(True, True, True, False)),
    ("all", TaskSwitches(True, True, True, True)),
)
CONSISTENCY_GRID = ("kl", "cosine", "none")
PLACEMENT_GRID = ("bottleneck", "intermediate", "none")


class CliError(Exception):
    """User-facing command failure (bad config, bad paths)."""


def _log(msg: str) -> None:
    print(msg, flush=True)


# --- shared helpers ----------------------------------------------------------


def _prepare_out_dir(out, overwrite: bool):
    if out is None:
        raise CliError("this command needs --out DIR")
    out = str(out)
    if os.path.isdir(out) and os.listdir(out):
        if not overwrite:
            raise CliError(f"{out} exists and is not empty (use --overwrite)")
        for name in os.listdir(out):
            path = os.path.join(out, name)
            if os.path.isfile(path):
                os.remove(path)
    os.makedirs(out, exist_ok=True)
    return out


def _load_config(args) -> ExperimentConfig:
    cfg = expconfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.deterministic:
        overrides["deterministic"] = True
        overrides["dtype"] = "float64"
    if overrides:
        cfg = expconfig.with_overrides(cfg, **overrides)
    return cfg


def _stage_config(cfg: ExperimentConfig, stage: str) -> ExperimentConfig:
    overrides = {"stage": stage}
    if cfg.train.base_lr == TrainConfig.stage_default_lr("pretrain") and stage != "pretrain":
        overrides["base_lr"] = TrainConfig.stage_default_lr(stage)
    return expconfig.with_overrides(cfg, **overrides)


def _load_manifest(path):
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    root = os.path.dirname(os.path.abspath(path))

    def load_pairs(split):
        pairs = []
        for entry in manifest[split]:
            image = read_volume(os.path.join(root, entry["image"]))
            label = read_volume(os.path.join(root, entry["label"]))
            pairs.append((image, label))
        return pairs

    return manifest, load_pairs("train"), load_pairs("val")


def _corpus_for(cfg: ExperimentConfig):
    """Training pairs and validation cases from a manifest or generated fresh."""
    from .experiments import CorpusSpec, build_corpus

    data = cfg.data
    if data.manifest:
        _, train, val_pairs = _load_manifest(data.manifest)
        val = [EvalCase(f"val{i:03d}", img, lab) for i, (img, lab) in enumerate(val_pairs)]
        return train, val
    family = load_family(data.recipe) if data.recipe else None
    spec = CorpusSpec(n_train=data.n_train, n_val=data.n_val, shape=data.shape,
                      classes=data.classes, noise_sigma=data.noise_sigma, seed=data.seed)
    return build_corpus(spec, family=family)


def _write_resolved_config(cfg: ExperimentConfig, out_dir) -> None:
    expconfig.save(cfg, os.path.join(out_dir, "config.json"))


def _views_from(cfg: ExperimentConfig) -> list[ViewSpec]:
    return [ViewSpec.parse(v) for v in cfg.infer.views]


def _plan_from(cfg: ExperimentConfig) -> WindowPlan:
    return WindowPlan(window=cfg.infer.window, overlap=cfg.infer.overlap,
                      blend=cfg.infer.blend)


# --- subcommands ---------------------------------------------------------------


def cmd_gen_data(args) -> int:
    out = args.out
    if out is None:
        cache = os.environ.get(CACHE_ENV)
        if not cache:
            raise CliError(f"gen-data needs --out DIR (or set {CACHE_ENV})")
        out = os.path.join(cache, f"corpus-seed{args.seed or 0}")
    out = _prepare_out_dir(out, args.overwrite)
    seed = args.seed if args.seed is not None else 0
    family = load_family(args.recipe) if args.recipe else default_family(
        tuple(args.shape), args.classes, args.noise_sigma)
    stream = rng_mod.stream(seed, "data")
    manifest = {"seed": seed, "classes": family["classes"], "shape": family["shape"],
                "train": [], "val": []}
    for split, count in (("train", args.n_train), ("val", args.n_val)):
        for i in range(count):
            phantom = sample_phantom(family, seed=int(stream.integers(2**62)))
            image, label = gen_phantom(phantom)
            img_name = f"{split}_{i:04d}_img.smmv"
            lab_name = f"{split}_{i:04d}_lab.smmv"
            write_volume(image, os.path.join(out, img_name))
            write_volume(label, os.path.join(out, lab_name))
            manifest[split].append({"image": img_name, "label": lab_name})
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _log(f"wrote {args.n_train} train / {args.n_val} val phantom pairs to {out}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _stage_config(_load_config(args), "pretrain")
    out = _prepare_out_dir(args.out, args.overwrite)
    _write_resolved_config(cfg, out)
    train, _ = _corpus_for(cfg)
    images = [img for img, _ in train]
    state = pretrain_run(images, cfg.model, cfg.train, out_dir=out,
                         init_from=args.init)
    _log(f"pretrain done: {state.step} steps, final loss "
         f"{state.trace[-1]['total']:.4f}, run dir {out}")
    return 0


def _run_finetune_like(args, stage: str) -> int:
    cfg = _stage_config(_load_config(args), stage)
    out = _prepare_out_dir(args.out, args.overwrite)
    _write_resolved_config(cfg, out)
    train, _ = _corpus_for(cfg)
    from .experiments import labeled_subset

    if stage == "semisup":
        labeled, unlabeled = labeled_subset(train, cfg.train.label_ratio, cfg.data.seed)
        state = semisup_run(labeled, unlabeled, cfg.model, cfg.train, out_dir=out,
                            init_from=args.init)
    else:
        labeled, _ = labeled_subset(train, cfg.train.label_ratio, cfg.data.seed)
        state = finetune_run(labeled, cfg.model, cfg.train, out_dir=out,
                             init_from=args.init)
    for line in state.lineage:
        if "encoder init" in line:
            _log(line)
    _log(f"{stage} done: {state.step} steps, final loss "
         f"{state.trace[-1]['total']:.4f}, run dir {out}")
    return 0


def cmd_finetune(args) -> int:
    return _run_finetune_like(args, "finetune")


def cmd_semisup(args) -> int:
    return _run_finetune_like(args, "semisup")


def _model_from_ckpt(path, expected: ModelConfig | None = None) -> MultiViewModel:
    from .container import read_container
    from .net.checkpoint import WEIGHTS_FORMAT, load_weights
    from .train.state import TRAIN_STATE_FORMAT, load_checkpoint

    meta, _ = read_container(path)
    fmt = meta.get("format")
    if fmt == WEIGHTS_FORMAT:
        cfg, tensors = load_weights(path, expected=expected)
        model = MultiViewModel(cfg)
        model.load_state_arrays(tensors)
        return model
    if fmt == TRAIN_STATE_FORMAT:
        return load_checkpoint(path).model
    raise CliError(f"{path}: unknown checkpoint format {fmt!r}")


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    out = _prepare_out_dir(args.out, args.overwrite)
    _write_resolved_config(cfg, out)
    _, val = _corpus_for(cfg)
    views = _views_from(cfg)
    plan = _plan_from(cfg)
    classes = cfg.model.num_classes
    if args.oracle:
        predict_for_case = lambda case: truth_oracle(case.label)  # noqa: E731
    else:
        if not args.ckpt:
            raise CliError("eval needs --ckpt (or --oracle)")
        model = _model_from_ckpt(args.ckpt)
        classes = model.config.num_classes
        predictor = model_predictor(model)
        predict_for_case = lambda case: predictor  # noqa: E731
    report = evaluate(val, predict_for_case, plan, views, classes,
                      hd_mode=cfg.infer.hd_mode,
                      csv_path=os.path.join(out, "metrics.csv"))
    _log(f"fused: mean dice {report.mean_dice():.4f}, mean hd {report.mean_hd():.4f}")
    if args.per_view or cfg.report.per_view:
        for spec in views:
            per = evaluate(val, predict_for_case, plan, [spec], classes,
                           hd_mode=cfg.infer.hd_mode,
                           csv_path=os.path.join(out, f"metrics_view-{spec.view}{spec.k}.csv"))
            _log(f"view {spec}: mean dice {per.mean_dice():.4f}")
    return 0


def cmd_ablate(args) -> int:
    import csv as csv_mod

    cfg = _load_config(args)
    out = _prepare_out_dir(args.out, args.overwrite)
    _write_resolved_config(cfg, out)
    from .experiments import CorpusSpec, build_corpus, eval_views, finetune_model, labeled_subset, pretrain_encoder

    data = cfg.data
    spec = CorpusSpec(n_train=data.n_train, n_val=data.n_val, shape=data.shape,
                      classes=data.classes, noise_sigma=data.noise_sigma, seed=data.seed)
    train, val = build_corpus(spec)
    images = [img for img, _ in train]
    seed = cfg.train.seed
    pre_steps = max(1, cfg.train.total_steps)
    ft_steps = max(1, cfg.train.total_steps)
    rows = []

    def ft(model_cfg, labeled, init_model=None):
        state = finetune_model(labeled, model_cfg, seed=seed, steps=ft_steps,
                               init_model=init_model, base_cfg=cfg.train)
        return eval_views(state.model, val)

    labeled_full, _ = labeled_subset(train, cfg.train.label_ratio, data.seed)
    if args.suite == "mask_ratio":
        for ratio in MASK_RATIO_GRID:
            base = dataclasses.replace(cfg.train, mask_ratio=ratio)
            pre = pretrain_encoder(images, cfg.model, cfg.train.tasks, seed=seed,
                                   steps=pre_steps, base_cfg=base)
            res = ft(cfg.model, labeled_full, init_model=pre.model)
            rows.append({"cell": ratio, "dice": res["fused"]})
    elif args.suite == "proxy_tasks":
        for name, tasks in PROXY_GRID:
            init = None
            if tasks.enabled():
                init = pretrain_encoder(images, cfg.model, tasks, seed=seed,
                                        steps=pre_steps, base_cfg=cfg.train).model
            res = ft(cfg.model, labeled_full, init_model=init)
            rows.append({"cell": name, "dice": res["fused"]})
    elif args.suite == "consistency":
        for kind in CONSISTENCY_GRID:
            base = dataclasses.replace(
                cfg.train,
                finetune_weights=dataclasses.replace(cfg.train.finetune_weights,
                                                     consistency_kind=kind))
            state = finetune_model(labeled_full, cfg.model, seed=seed, steps=ft_steps,
                                   base_cfg=base)
            rows.append({"cell": kind, "dice": eval_views(state.model, val)["fused"]})
    elif args.suite == "placement":
        for placement in PLACEMENT_GRID:
            model_cfg = dataclasses.replace(cfg.model, cross_attn_placement=placement)
            res = ft(model_cfg, labeled_full)
            rows.append({"cell": placement, "dice": res["fused"]})
    elif args.suite == "label_ratio":
        for ratio in LABEL_RATIO_GRID:
            labeled, _ = labeled_subset(train, ratio, data.seed)
            res = ft(cfg.model, labeled)
            rows.append({"cell": f"{int(ratio * 100)}%", "dice": res["fused"]})
    else:
        raise CliError(f"unknown ablation suite {args.suite!r}")

    table_path = os.path.join(out, "table.csv")
    with open(table_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv_mod.writer(fh)
        writer.writerow(["cell", "dice"])
        for row in rows:
            writer.writerow([row["cell"], repr(float(row["dice"]))])
    if cfg.report.plots:
        _plot_ablation(rows, args.suite, os.path.join(out, "plot.png"))
    _log(f"ablation {args.suite}: {len(rows)} cells, table {table_path}")
    return 0


def _plot_ablation(rows, suite, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [str(r["cell"]) for r in rows]
    values = [r["dice"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(range(len(rows)), values, color="#4878a8")
    ax.set_xticks(range(len(rows)), labels, rotation=20)
    ax.set_ylabel("mean val Dice (fused)")
    ax.set_title(f"ablation: {suite}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_inspect_ckpt(args) -> int:
    from .container import read_container

    meta, tensors = read_container(args.ckpt)
    _log(f"format: {meta.get('format')}")
    for key in ("version", "step", "opt_t"):
        if key in meta:
            _log(f"{key}: {meta[key]}")
    for key in ("config", "model_config"):
        if key in meta:
            _log(f"{key}: {json.dumps(meta[key], sort_keys=True)}")
    _log(f"tensors: {len(tensors)}")
    total = 0
    for name, arr in tensors.items():
        total += arr.size
        _log(f"  {name} {tuple(arr.shape)} {arr.dtype}")
    _log(f"total elements: {total} (checksums ok)")
    return 0


# --- argument parsing -------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", help="experiment config JSON (defaults when omitted)")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--out", required=False, help="output directory")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded float64 for bit-reproducible runs")
    p.add_argument("--overwrite", action="store_true",
                   help="allow writing into an existing non-empty --out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvseg3d",
        description="multi-view masked pretraining and cross-view 3D segmentation "
                    "(desk scale)",
        epilog=expconfig.reference_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a phantom corpus + manifest",
                       epilog=f"default --out: ${CACHE_ENV}/corpus-seed<seed>")
    _add_common(p)
    p.add_argument("--n-train", type=int, default=64)
    p.add_argument("--n-val", type=int, default=16)
    p.add_argument("--recipe", help="phantom family JSON (built-in family when omitted)")
    p.add_argument("--shape", type=int, nargs=3, default=[32, 32, 32])
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.set_defaults(fn=cmd_gen_data)

    for name, fn, extra_init in (
        ("pretrain", cmd_pretrain, True),
        ("finetune", cmd_finetune, True),
        ("semisup", cmd_semisup, True),
    ):
        p = sub.add_parser(name, help=f"run the {name} loop")
        _add_common(p)
        if extra_init:
            p.add_argument("--init", help="weight checkpoint to initialize the encoder from")
        p.set_defaults(fn=fn)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the validation split")
    _add_common(p)
    p.add_argument("--ckpt", help="weight or train-state checkpoint")
    p.add_argument("--oracle", action="store_true",
                   help="score a perfect predictor (pipeline self-check)")
    p.add_argument("--per-view", action="store_true",
                   help="also emit single-view metric files")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="run one ablation suite at desk scale")
    _add_common(p)
    p.add_argument("--suite", required=True,
                   choices=["mask_ratio", "proxy_tasks", "consistency", "placement",
                            "label_ratio"])
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("inspect-ckpt", help="print checkpoint metadata and keys")
    p.add_argument("ckpt")
    p.set_defaults(fn=cmd_inspect_ckpt)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (CliError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
