"""View-transform algebra: axis permutations plus quarter-turns.

A ``ViewSpec`` names one observation of a volume: first the axes are permuted
so the chosen viewing axis becomes axis 0, then the volume is rotated ``k``
quarter-turns in the in-plane axes (1, 2).

Normative conventions for this artifact:

* view -> axis order: axial = (D, H, W) identity, coronal = (H, D, W),
  sagittal = (W, H, D);
* one quarter-turn acts as ``out[i][j] = in[j][n-1-i]`` in the plane
  orthogonal to the viewing axis (``numpy.rot90`` with ``axes=(1, 2)``),
  e.g. the 2x2 slice [[1,2],[3,4]] turns into [[2,4],[1,3]].

All transforms are pure voxel permutations; ``invert_view`` undoes
``apply_view`` bit-exactly. ``(axial, k=0)`` is the identity, and
``(axial, 1)`` applied four times is the identity on any volume, which is the
quarter-turn 4-cycle about a fixed axis.

Array-level helpers operate on the last three axes, so they apply unchanged
to bare volumes ``(D, H, W)``, class fields ``(C, D, H, W)``, and batches.
They accept numpy arrays or torch tensors (torch transforms stay
differentiable).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VIEWS = ("axial", "coronal", "sagittal")

_PERM = {
    "axial": (0, 1, 2),
    "coronal": (1, 0, 2),
    "sagittal": (2, 1, 0),
}


@dataclass(frozen=True)
class ViewSpec:
    """One of the 12 observation transforms: a named view plus quarter-turns."""

    view: str = "axial"
    k: int = 0

    def __post_init__(self) -> None:
        if self.view not in VIEWS:
            raise ValueError(f"unknown view {self.view!r}, expected one of {VIEWS}")
        if self.k not in (0, 1, 2, 3):
            raise ValueError(f"quarter-turn count must be in 0..3, got {self.k}")

    @property
    def is_identity(self) -> bool:
        return self.view == "axial" and self.k == 0

    def __str__(self) -> str:
        return f"{self.view}:{self.k}"

    @classmethod
    def parse(cls, text: str) -> "ViewSpec":
        """Parse 'view' or 'view:k' strings, e.g. 'coronal:2'."""
        view, _, k = text.partition(":")
        return cls(view=view.strip(), k=int(k) if k else 0)


ALL_VIEW_SPECS = tuple(ViewSpec(v, k) for v in VIEWS for k in range(4))


def _is_torch(a) -> bool:
    return type(a).__module__.split(".")[0] == "torch"


def _transpose_last3(a, perm: tuple[int, int, int]):
    n = a.ndim
    axes = tuple(range(n - 3)) + tuple(n - 3 + p for p in perm)
    if _is_torch(a):
        return a.permute(axes)
    return np.transpose(a, axes)


def _rot90_last3(a, k: int):
    if k % 4 == 0:
        return a
    if _is_torch(a):
        return __import__("torch").rot90(a, k, dims=(a.ndim - 2, a.ndim - 1))
    return np.rot90(a, k, axes=(a.ndim - 2, a.ndim - 1))


def _contiguous(a):
    if _is_torch(a):
        return a.contiguous()
    return np.ascontiguousarray(a)


def apply_view_array(a, spec: ViewSpec):
    """Transform the last three axes of ``a`` into the spec's view frame."""
    out = _transpose_last3(a, _PERM[spec.view])
    out = _rot90_last3(out, spec.k)
    return _contiguous(out)


def invert_view_array(a, spec: ViewSpec):
    """Exact inverse of :func:`apply_view_array` for the same spec."""
    out = _rot90_last3(a, -spec.k)
    inv = tuple(int(p) for p in np.argsort(_PERM[spec.view]))
    out = _transpose_last3(out, inv)
    return _contiguous(out)


# Class-probability / logit fields (..., C, D, H, W) transform identically:
# only the spatial axes move.
apply_view_field = apply_view_array
invert_view_field = invert_view_array


def _view_spacing(spacing: tuple[float, float, float], spec: ViewSpec) -> tuple[float, float, float]:
    s = tuple(spacing[p] for p in _PERM[spec.view])
    if spec.k % 2 == 1:
        s = (s[0], s[2], s[1])
    return s  # type: ignore[return-value]


def _unview_spacing(spacing: tuple[float, float, float], spec: ViewSpec) -> tuple[float, float, float]:
    s = spacing
    if spec.k % 2 == 1:
        s = (s[0], s[2], s[1])
    inv = np.argsort(_PERM[spec.view])
    return tuple(s[p] for p in inv)  # type: ignore[return-value]


def apply_view(v, spec: ViewSpec):
    """Observe a Volume under a view spec; spacing follows the axes."""
    return v.with_data(apply_view_array(v.data, spec), spacing=_view_spacing(v.spacing, spec))


def invert_view(v, spec: ViewSpec):
    """Map a Volume observed under ``spec`` back to the canonical frame."""
    return v.with_data(invert_view_array(v.data, spec), spacing=_unview_spacing(v.spacing, spec))
