"""Sliding-window inference, multi-view fusion, and evaluation metrics."""

from .window import (
    ViewAwarePredictor,
    WindowPlan,
    coverage_counts,
    model_predictor,
    multiview_predict,
    oracle_predictor,
    sliding_window,
    window_origins,
)
from .metrics import EvalCase, MetricsReport, MetricsRow, dice, evaluate, hausdorff

__all__ = [
    "WindowPlan",
    "ViewAwarePredictor",
    "truth_oracle",
    "window_origins",
    "coverage_counts",
    "sliding_window",
    "multiview_predict",
    "model_predictor",
    "oracle_predictor",
    "EvalCase",
    "MetricsRow",
    "MetricsReport",
    "dice",
    "hausdorff",
    "evaluate",
]


def truth_oracle(label):
    """A perfect view-aware predictor built from the ground-truth labels."""
    from ..voldata import apply_view
    from .window import oracle_predictor

    return ViewAwarePredictor(lambda spec: oracle_predictor(apply_view(label, spec)))
