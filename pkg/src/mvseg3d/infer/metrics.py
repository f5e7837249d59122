"""Dice and Hausdorff metrics plus dataset-level evaluation reports.

Conventions: a class empty in both volumes scores Dice 1 and HD 0; a class
empty in exactly one volume scores Dice 0 and an undefined HD (NaN sentinel,
reported but excluded from aggregate means). HD is computed over all voxels
of the class (not surfaces), scaled by voxel spacing.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ..voldata import ViewSpec, Volume

HD_MODES = ("max", "p95")

# cap on pairwise-distance block size, keeps memory bounded without changing
# any floating-point result (min over blocks == global min)
_BLOCK = 4096


def _class_coords(vol: Volume, class_id: int) -> np.ndarray:
    return np.argwhere(vol.data == class_id).astype(np.float64)


def dice(pred: Volume, truth: Volume, class_id: int) -> float:
    """2|P.T| / (|P| + |T|) over the voxel sets of one class."""
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    p = pred.data == class_id
    t = truth.data == class_id
    np_, nt = int(p.sum()), int(t.sum())
    if np_ == 0 and nt == 0:
        return 1.0
    inter = int(np.logical_and(p, t).sum())
    return 2.0 * inter / (np_ + nt)


def _directed_min_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """For each point of a, the distance to its nearest point of b."""
    out = np.full(len(a), np.inf)
    for start in range(0, len(b), _BLOCK):
        block = b[start: start + _BLOCK]
        d2 = ((a[:, None, :] - block[None, :, :]) ** 2).sum(axis=-1)
        np.minimum(out, np.sqrt(d2).min(axis=1), out=out)
    return out


def hausdorff(pred: Volume, truth: Volume, class_id: int, mode: str = "max") -> float:
    """Symmetric Hausdorff distance between class voxel sets, in mm.

    ``max`` takes the larger of the two directed maxima; ``p95`` the larger
    of the two directed 95th percentiles. Returns NaN when exactly one set
    is empty, 0.0 when both are.
    """
    if mode not in HD_MODES:
        raise ValueError(f"hd mode must be one of {HD_MODES}, got {mode!r}")
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    spacing = np.asarray(truth.spacing, dtype=np.float64)
    a = _class_coords(pred, class_id) * spacing
    b = _class_coords(truth, class_id) * spacing
    if len(a) == 0 and len(b) == 0:
        return 0.0
    if len(a) == 0 or len(b) == 0:
        return float("nan")
    d_ab = _directed_min_dists(a, b)
    d_ba = _directed_min_dists(b, a)
    if mode == "max":
        return float(max(d_ab.max(), d_ba.max()))
    return float(max(np.percentile(d_ab, 95), np.percentile(d_ba, 95)))


@dataclass(frozen=True)
class EvalCase:
    case_id: str
    image: Volume
    label: Volume


@dataclass(frozen=True)
class MetricsRow:
    case_id: str
    class_id: int
    dice: float
    hd: float
    hd_mode: str


@dataclass
class MetricsReport:
    """Per-case, per-foreground-class metrics plus AGG aggregate rows."""

    rows: list[MetricsRow] = field(default_factory=list)
    hd_mode: str = "max"

    def add(self, case_id: str, class_id: int, dice_value: float, hd_value: float) -> None:
        self.rows.append(MetricsRow(case_id, class_id, dice_value, hd_value, self.hd_mode))

    def class_ids(self) -> list[int]:
        return sorted({r.class_id for r in self.rows})

    def mean_dice(self, class_id: int | None = None) -> float:
        vals = [r.dice for r in self.rows if class_id is None or r.class_id == class_id]
        return float(np.mean(vals)) if vals else float("nan")

    def mean_hd(self, class_id: int | None = None) -> float:
        vals = [
            r.hd for r in self.rows
            if (class_id is None or r.class_id == class_id) and not math.isnan(r.hd)
        ]
        return float(np.mean(vals)) if vals else float("nan")

    def aggregate_rows(self) -> list[MetricsRow]:
        if not self.rows:
            return []
        aggs = [
            MetricsRow("AGG", c, self.mean_dice(c), self.mean_hd(c), self.hd_mode)
            for c in self.class_ids()
        ]
        aggs.append(MetricsRow("AGG", -1, self.mean_dice(), self.mean_hd(), self.hd_mode))
        return aggs

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["case_id", "class_id", "dice", "hd", "hd_mode"])
            for row in [*self.rows, *self.aggregate_rows()]:
                class_id = "ALL" if row.case_id == "AGG" and row.class_id == -1 else row.class_id
                writer.writerow([row.case_id, class_id, repr(row.dice), repr(row.hd), row.hd_mode])


def evaluate(cases, predict_for_case, plan, views: list[ViewSpec],
             num_classes: int, hd_mode: str = "max", csv_path=None) -> MetricsReport:
    """Run multi-view prediction over a dataset and score every foreground class.

    ``predict_for_case`` maps an EvalCase to a window predictor (so tests can
    substitute a ground-truth oracle). Deterministic: rerunning yields an
    identical report.
    """
    from .window import multiview_predict

    report = MetricsReport(hd_mode=hd_mode)
    for case in cases:
        predict = predict_for_case(case)
        pred, _ = multiview_predict(case.image, predict, plan, views, num_classes)
        for class_id in range(1, num_classes):
            report.add(
                case.case_id, class_id,
                dice(pred, case.label, class_id),
                hausdorff(pred, case.label, class_id, mode=hd_mode),
            )
    if csv_path is not None:
        report.write_csv(csv_path)
    return report
