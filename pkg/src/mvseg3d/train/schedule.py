"""Learning-rate schedule: linear warmup, cosine decay, layer-wise scaling."""

from __future__ import annotations

import math


def lr_at(step: int, base_lr: float, warmup_iters: int, total_steps: int) -> float:
    """Linear warmup 0 -> base_lr over ``warmup_iters``, then cosine decay to 0.

    lr(0) = 0, lr(warmup_iters) = base_lr, lr(total_steps) = 0, and the
    midpoint of the cosine phase sits at base_lr / 2.
    """
    if step <= 0:
        return 0.0
    if step < warmup_iters:
        return base_lr * step / warmup_iters
    if step >= total_steps:
        return 0.0
    span = total_steps - warmup_iters
    frac = (step - warmup_iters) / span
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * frac))


def layerwise_scale(param_name: str, stages: int, gamma: float) -> float:
    """Layer-wise decay factor for one parameter.

    Encoder stage s of S stages scales by gamma^(S - s): the deepest stage
    gets gamma^1, the shallowest gamma^S. The patch embedding scales like the
    shallowest stage; decoder and heads run at the full rate.
    """
    if not param_name.startswith("encoder."):
        return 1.0
    rest = param_name[len("encoder."):]
    if rest.startswith("patch_embed."):
        return gamma**stages
    for prefix in ("stages.", "merges."):
        if rest.startswith(prefix):
            stage = int(rest[len(prefix):].split(".", 1)[0])
            return gamma ** (stages - stage)
    return 1.0


def layerwise_scales(param_names, stages: int, gamma: float) -> dict[str, float]:
    return {name: layerwise_scale(name, stages, gamma) for name in param_names}
