"""The Volume container: a 3D scalar grid with kind and spacing metadata."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

INTENSITY = "intensity"
LABEL = "label"


@dataclass
class Volume:
    """A 3D grid of image intensities in [0, 1] or integer class labels.

    ``data`` is indexed ``(D, H, W)``. ``spacing`` is mm per voxel along each
    axis and travels with the axes through view transforms. ``classes`` is the
    class count for label volumes (0 for intensity volumes).
    """

    data: np.ndarray
    kind: str = INTENSITY
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    classes: int = 0

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        self.spacing = tuple(float(s) for s in self.spacing)
        self.validate()

    def validate(self) -> None:
        if self.data.ndim != 3:
            raise ValueError(f"volume data must be 3-D, got shape {self.data.shape}")
        if any(d < 1 for d in self.data.shape):
            raise ValueError(f"all volume dims must be >= 1, got {self.data.shape}")
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be three positive reals, got {self.spacing}")
        if self.kind == INTENSITY:
            if not np.issubdtype(self.data.dtype, np.floating):
                raise ValueError(f"intensity volume must be float, got {self.data.dtype}")
            if not np.all(np.isfinite(self.data)):
                raise ValueError("intensity volume contains NaN/Inf")
            lo, hi = float(self.data.min()), float(self.data.max())
            if lo < 0.0 or hi > 1.0:
                raise ValueError(f"intensity values must lie in [0,1], got range [{lo}, {hi}]")
        elif self.kind == LABEL:
            if not np.issubdtype(self.data.dtype, np.integer):
                raise ValueError(f"label volume must be integer, got {self.data.dtype}")
            if self.classes == 0:
                self.classes = int(self.data.max()) + 1 if self.data.size else 1
            if self.data.min() < 0 or self.data.max() >= self.classes:
                raise ValueError(
                    f"label values must lie in [0, {self.classes - 1}], "
                    f"got range [{self.data.min()}, {self.data.max()}]"
                )
        else:
            raise ValueError(f"unknown volume kind {self.kind!r}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def with_data(self, data: np.ndarray, spacing: tuple[float, float, float] | None = None) -> "Volume":
        """Copy of this volume with new voxel data (and optionally spacing)."""
        return replace(self, data=data, spacing=self.spacing if spacing is None else spacing)


def normalize_intensity(data: np.ndarray) -> np.ndarray:
    """Min-max normalize raw scalars to [0, 1]; constant input maps to zeros."""
    data = np.asarray(data, dtype=np.float32)
    lo, hi = float(data.min()), float(data.max())
    if hi == lo:
        return np.zeros_like(data)
    return (data - lo) / (hi - lo)
