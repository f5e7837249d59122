"""Deterministic patch-grid masking with an exact mask ratio."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """Patch/volume geometry mismatch."""


_AXIS_NAMES = ("D", "H", "W")


@dataclass(frozen=True)
class MaskSpec:
    """A masking plan: patch size, mask ratio, and seed.

    Exactly ``round(ratio * G)`` of the ``G`` patches are masked, with
    round-half-to-even, so the realized ratio is exact and deterministic.
    """

    patch: tuple[int, int, int] = (4, 4, 4)
    ratio: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.patch) != 3 or any(int(p) < 1 for p in self.patch):
            raise ValueError(f"patch dims must be three positive ints, got {self.patch}")
        if not (0.0 <= self.ratio < 1.0):
            raise ValueError(f"mask ratio must lie in [0, 1), got {self.ratio}")


@dataclass(frozen=True)
class PatchMask:
    """A boolean grid over patches; True marks a masked patch."""

    grid: np.ndarray
    patch: tuple[int, int, int]

    @property
    def volume_shape(self) -> tuple[int, int, int]:
        return tuple(g * p for g, p in zip(self.grid.shape, self.patch))  # type: ignore[return-value]

    @property
    def num_masked(self) -> int:
        return int(self.grid.sum())

    def voxel_mask(self) -> np.ndarray:
        """Expand the patch grid to a per-voxel boolean mask."""
        m = self.grid
        for axis, rep in enumerate(self.patch):
            m = np.repeat(m, rep, axis=axis)
        return m


def make_mask(shape: tuple[int, int, int], spec: MaskSpec) -> PatchMask:
    """Draw the deterministic patch mask for a volume shape.

    Raises GeometryError if a patch dim does not divide the volume dim,
    naming the offending axis.
    """
    for axis, (dim, p) in enumerate(zip(shape, spec.patch)):
        if dim % p != 0:
            raise GeometryError(
                f"axis {axis} ({_AXIS_NAMES[axis]}): volume dim {dim} "
                f"not divisible by patch dim {p}"
            )
    grid_shape = tuple(d // p for d, p in zip(shape, spec.patch))
    total = int(np.prod(grid_shape))
    n_masked = int(round(spec.ratio * total))  # round-half-to-even
    rng = np.random.default_rng(spec.seed)
    flat = np.zeros(total, dtype=bool)
    if n_masked:
        flat[rng.choice(total, size=n_masked, replace=False)] = True
    return PatchMask(grid=flat.reshape(grid_shape), patch=tuple(int(p) for p in spec.patch))


def apply_mask(v, m: PatchMask, fill: float = 0.0):
    """Replace voxels of masked patches with ``fill``; others stay bit-identical."""
    if m.volume_shape != tuple(v.shape):
        raise GeometryError(
            f"mask geometry {m.volume_shape} does not match volume shape {tuple(v.shape)}"
        )
    data = v.data.copy()
    data[m.voxel_mask()] = fill
    return v.with_data(data)
