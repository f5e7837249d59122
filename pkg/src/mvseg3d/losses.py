"""Scalar training objectives.

All functions are pure and differentiable through their tensor inputs
(double precision supported throughout), with analytic values at their
documented minimizers. Probabilities are clamped at 1e-12 before every log
so gradients stay finite at the simplex boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .voldata.views import ViewSpec, invert_view_array

PROB_FLOOR = 1e-12
DICE_EPS = 1e-5
CONSISTENCY_KINDS = ("kl", "cosine", "none")


@dataclass(frozen=True)
class PretrainLossWeights:
    """Coefficients of the four proxy objectives (all default 1)."""

    alpha_rec: float = 1.0
    alpha_rot: float = 1.0
    alpha_con: float = 1.0
    alpha_mul: float = 1.0

    def __post_init__(self) -> None:
        for name, a in self.as_tuple():
            if not (a >= 0.0 and a == a and a != float("inf")):
                raise ValueError(f"{name} must be a finite non-negative real, got {a}")

    def as_tuple(self):
        return (
            ("alpha_rec", self.alpha_rec),
            ("alpha_rot", self.alpha_rot),
            ("alpha_con", self.alpha_con),
            ("alpha_mul", self.alpha_mul),
        )


@dataclass(frozen=True)
class FinetuneLossWeights:
    """Fine-tuning loss coefficients and the consistency flavor."""

    beta_dicece: float = 1.0
    beta_mc: float = 1.0
    consistency_kind: str = "kl"

    def __post_init__(self) -> None:
        if self.beta_dicece < 0 or self.beta_mc < 0:
            raise ValueError("loss weights must be non-negative")
        if self.consistency_kind not in CONSISTENCY_KINDS:
            raise ValueError(
                f"consistency_kind must be one of {CONSISTENCY_KINDS}, "
                f"got {self.consistency_kind!r}"
            )


def _check_same_shape(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def loss_rec(x: torch.Tensor, y_rec: torch.Tensor) -> torch.Tensor:
    """Mean squared reconstruction error; 0 iff the tensors are equal."""
    _check_same_shape(x, y_rec, "loss_rec")
    return (x - y_rec).pow(2).mean()


def loss_rot(logits: torch.Tensor, target) -> torch.Tensor:
    """Cross-entropy over the four quarter-turn classes (log-sum-exp stabilized)."""
    if logits.dim() == 1:
        logits = logits.unsqueeze(0)
    target = torch.as_tensor(target, device=logits.device).reshape(-1)
    if logits.shape[-1] != 4:
        raise ValueError(f"rotation logits must have 4 classes, got {logits.shape[-1]}")
    if target.min() < 0 or target.max() > 3:
        raise ValueError(f"rotation target out of range 0..3: {target.tolist()}")
    log_probs = logits - torch.logsumexp(logits, dim=-1, keepdim=True)
    return -log_probs.gather(1, target.unsqueeze(1)).mean()


def loss_con(embeddings: torch.Tensor, partner, t: float = 0.5) -> torch.Tensor:
    """InfoNCE over 2N anchors with cosine similarity.

    ``partner[i]`` indexes anchor i's positive. The denominator runs over all
    k != i, positive included. The mean is taken over all 2N anchors.
    """
    if t <= 0:
        raise ValueError(f"temperature must be positive, got {t}")
    n2 = embeddings.shape[0]
    if n2 < 4:
        raise ValueError(f"contrastive loss needs at least 4 embeddings (2N >= 4), got {n2}")
    partner = torch.as_tensor(partner, device=embeddings.device).reshape(-1)
    if partner.shape[0] != n2:
        raise ValueError("pairing must assign one partner per embedding")
    norms = embeddings.norm(dim=1)
    if (norms == 0).any():
        raise ValueError("zero vector has undefined cosine similarity")
    unit = embeddings / norms.unsqueeze(1)
    sims = (unit @ unit.T) / t
    eye = torch.eye(n2, dtype=torch.bool, device=embeddings.device)
    denom = torch.logsumexp(sims.masked_fill(eye, float("-inf")), dim=1)
    pos = sims.gather(1, partner.unsqueeze(1)).squeeze(1)
    return (denom - pos).mean()


def loss_mul(y_rec_i: torch.Tensor, y_rec_j: torch.Tensor,
             spec_i: ViewSpec, spec_j: ViewSpec) -> torch.Tensor:
    """Mutual reconstruction MSE after mapping both views to the canonical frame."""
    a = invert_view_array(y_rec_i, spec_i)
    b = invert_view_array(y_rec_j, spec_j)
    _check_same_shape(a, b, "loss_mul (after canonicalization)")
    return (a - b).pow(2).mean()


def loss_pretrain(parts, w: PretrainLossWeights) -> torch.Tensor:
    """Weighted sum of the four proxy losses (plain sum at default weights)."""
    rec, rot, con, mul = parts
    alphas = (w.alpha_rec, w.alpha_rot, w.alpha_con, w.alpha_mul)
    total = None
    for alpha, part in zip(alphas, (rec, rot, con, mul)):
        term = alpha * torch.as_tensor(part)
        total = term if total is None else total + term
    return total


def _class_probs(logits: torch.Tensor) -> torch.Tensor:
    """Softmax over the class axis (dim 0) of a (C, *spatial) field."""
    return torch.softmax(logits, dim=0)


def loss_consistency(logits_i: torch.Tensor, logits_j: torch.Tensor,
                     kind: str = "kl", symmetric: bool = True) -> torch.Tensor:
    """Agreement between two per-voxel class distributions.

    ``kl``: voxel-mean KL divergence, symmetrized by default
    ((D(i||j) + D(j||i)) / 2); pass ``symmetric=False`` for the
    one-directional D(i||j). ``cosine``: 1 minus the mean per-voxel cosine
    similarity of the probability vectors. ``none``: constant zero.
    """
    if kind not in CONSISTENCY_KINDS:
        raise ValueError(f"unknown consistency kind {kind!r}")
    _check_same_shape(logits_i, logits_j, "loss_consistency")
    if kind == "none":
        return torch.zeros((), dtype=logits_i.dtype, device=logits_i.device)
    p = _class_probs(logits_i)
    q = _class_probs(logits_j)
    if kind == "cosine":
        num = (p * q).sum(dim=0)
        den = p.norm(dim=0) * q.norm(dim=0)
        return 1.0 - (num / den.clamp_min(PROB_FLOOR)).mean()
    p = p.clamp_min(PROB_FLOOR)
    q = q.clamp_min(PROB_FLOOR)
    d_ij = (p * (p.log() - q.log())).sum(dim=0).mean()
    if not symmetric:
        return d_ij
    d_ji = (q * (q.log() - p.log())).sum(dim=0).mean()
    return 0.5 * (d_ij + d_ji)


def _check_labels(logits: torch.Tensor, labels: torch.Tensor) -> None:
    num_classes = logits.shape[0]
    if labels.shape != logits.shape[1:]:
        raise ValueError(
            f"labels shape {tuple(labels.shape)} does not match logits spatial "
            f"shape {tuple(logits.shape[1:])}"
        )
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(
            f"label out of range 0..{num_classes - 1}: "
            f"[{int(labels.min())}, {int(labels.max())}]"
        )


def _flat_probs_onehot(logits: torch.Tensor, labels: torch.Tensor):
    num_classes = logits.shape[0]
    flat_p = _class_probs(logits).reshape(num_classes, -1)
    onehot = torch.nn.functional.one_hot(labels.reshape(-1), num_classes)
    return flat_p, onehot.T.to(flat_p.dtype)


def soft_dice_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """1 minus the class-mean soft Dice: ``2 sum(p_c y_c) / (sum p_c + sum y_c + eps)``."""
    _check_labels(logits, labels)
    flat_p, onehot = _flat_probs_onehot(logits, labels)
    inter = (flat_p * onehot).sum(dim=1)
    denom = flat_p.sum(dim=1) + onehot.sum(dim=1) + DICE_EPS
    return 1.0 - (2.0 * inter / denom).mean()


def voxel_cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Voxel-mean cross-entropy of softmax class probabilities."""
    _check_labels(logits, labels)
    flat_p, onehot = _flat_probs_onehot(logits, labels)
    return -(onehot * flat_p.clamp_min(PROB_FLOOR).log()).sum(dim=0).mean()


def loss_dicece(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Soft Dice loss plus voxel-mean cross-entropy on a (C, *spatial) field."""
    return soft_dice_loss(logits, labels) + voxel_cross_entropy(logits, labels)


def loss_finetune(dicece_terms, mc_term, w: FinetuneLossWeights) -> torch.Tensor:
    """beta_dicece * mean(per-view DiceCE) + beta_mc * consistency."""
    terms = [torch.as_tensor(t) for t in dicece_terms]
    stacked = torch.stack(terms)
    return w.beta_dicece * stacked.mean() + w.beta_mc * torch.as_tensor(mc_term)
