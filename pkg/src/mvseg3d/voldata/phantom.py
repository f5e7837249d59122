"""Synthetic phantoms: geometric primitives with analytically known labels.

A phantom recipe is a list of primitives rendered in order; later primitives
overwrite earlier ones wherever they overlap (painter's z-order). Primitives
reaching outside the grid are clipped at the boundary, never an error.
Membership is inclusive on lattice points: a sphere labels every voxel with
``||x - c|| <= r``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .volume import INTENSITY, LABEL, Volume

KINDS = ("sphere", "box", "ellipsoid")


@dataclass(frozen=True)
class Primitive:
    """One geometric primitive of a phantom recipe.

    ``size`` is kind-dependent: sphere ``(radius,)``, box full extents
    ``(sd, sh, sw)`` (membership ``|x_i - c_i| <= s_i / 2``), ellipsoid
    semi-axes ``(a, b, c)``.
    """

    kind: str
    center: tuple[float, float, float]
    size: tuple[float, ...]
    class_id: int
    intensity: tuple[float, float]  # band [lo, hi], one draw per rendering

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        lo, hi = self.intensity
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"intensity band must satisfy 0 <= lo <= hi <= 1, got {self.intensity}")
        if self.class_id < 0:
            raise ValueError("class_id must be >= 0")

    def membership(self, shape: tuple[int, int, int]) -> np.ndarray:
        """Boolean lattice mask of voxels inside the primitive."""
        grids = np.ogrid[: shape[0], : shape[1], : shape[2]]
        deltas = [g.astype(np.float64) - c for g, c in zip(grids, self.center)]
        if self.kind == "sphere":
            (r,) = self.size
            return deltas[0] ** 2 + deltas[1] ** 2 + deltas[2] ** 2 <= r * r
        if self.kind == "box":
            half = [s / 2.0 for s in self.size]
            return (
                (np.abs(deltas[0]) <= half[0])
                & (np.abs(deltas[1]) <= half[1])
                & (np.abs(deltas[2]) <= half[2])
            )
        axes = self.size
        return sum((d / a) ** 2 for d, a in zip(deltas, axes)) <= 1.0


@dataclass(frozen=True)
class Phantom:
    """A deterministic phantom recipe: primitives plus noise and a seed."""

    shape: tuple[int, int, int]
    primitives: tuple[Primitive, ...] = ()
    noise_sigma: float = 0.0
    seed: int = 0
    classes: int | None = None  # default: max class id + 1

    def __post_init__(self) -> None:
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def num_classes(self) -> int:
        if self.classes is not None:
            return self.classes
        return max((p.class_id for p in self.primitives), default=0) + 1


def gen_phantom(p: Phantom) -> tuple[Volume, Volume]:
    """Render a phantom into an (intensity, label) volume pair.

    Deterministic per seed: identical recipes produce bit-identical pairs.
    Intensity is clipped to [0, 1] after noise.
    """
    rng = np.random.default_rng(p.seed)
    intensity = np.zeros(p.shape, dtype=np.float64)
    label = np.zeros(p.shape, dtype=np.uint16)
    for prim in p.primitives:
        inside = prim.membership(p.shape)
        lo, hi = prim.intensity
        intensity[inside] = rng.uniform(lo, hi)
        label[inside] = prim.class_id
    if p.noise_sigma > 0:
        intensity = intensity + rng.normal(0.0, p.noise_sigma, size=p.shape)
    intensity = np.clip(intensity, 0.0, 1.0).astype(np.float32)
    return (
        Volume(intensity, kind=INTENSITY),
        Volume(label, kind=LABEL, classes=p.num_classes),
    )


# ---------------------------------------------------------------------------
# Randomized phantom families, for corpus generation.
# ---------------------------------------------------------------------------


def default_family(shape: tuple[int, int, int] = (32, 32, 32), classes: int = 4,
                   noise_sigma: float = 0.05) -> dict:
    """A built-in three-organ family: body ellipsoid, inner sphere, inner box.

    The body has its own intensity band; the sphere and box share one band on
    purpose, so telling them apart needs shape context, not just voxel
    intensity. Centers and sizes jitter per case.
    """
    if classes < 2:
        raise ValueError("family needs at least one foreground class")
    d, h, w = shape
    c = [d / 2.0, h / 2.0, w / 2.0]
    scale = min(shape) / 32.0
    templates = [
        {
            "kind": "ellipsoid", "class_id": 1, "center": c, "center_jitter": 1.5 * scale,
            "size": [11 * scale, 12 * scale, 12 * scale], "size_jitter": 1.5 * scale,
            "intensity": [0.30, 0.45],
        },
        {
            "kind": "sphere", "class_id": 2, "center": [c[0] - 3 * scale, c[1] - 3 * scale, c[2] - 2 * scale],
            "center_jitter": 2.5 * scale, "size": [5.0 * scale], "size_jitter": 1.0 * scale,
            "intensity": [0.62, 0.80],
        },
        {
            "kind": "box", "class_id": 3, "center": [c[0] + 4 * scale, c[1] + 3 * scale, c[2] + 3 * scale],
            "center_jitter": 3.0 * scale, "size": [7 * scale, 5 * scale, 9 * scale],
            "size_jitter": 1.5 * scale, "intensity": [0.62, 0.80],
        },
    ]
    return {
        "shape": list(shape),
        "classes": classes,
        "noise_sigma": noise_sigma,
        "primitives": templates[: classes - 1],
    }


def load_family(path) -> dict:
    """Load a phantom family recipe from a JSON document."""
    with open(path, "r", encoding="utf-8") as fh:
        family = json.load(fh)
    for key in ("shape", "classes", "primitives"):
        if key not in family:
            raise ValueError(f"family recipe missing required key {key!r}")
    return family


def sample_phantom(family: dict, seed: int) -> Phantom:
    """Draw one concrete phantom from a family recipe, deterministically."""
    rng = np.random.default_rng(seed)
    prims = []
    for t in family["primitives"]:
        cj = float(t.get("center_jitter", 0.0))
        sj = float(t.get("size_jitter", 0.0))
        center = tuple(float(c) + rng.uniform(-cj, cj) for c in t["center"])
        size = tuple(max(1.0, float(s) + rng.uniform(-sj, sj)) for s in t["size"])
        prims.append(
            Primitive(
                kind=t["kind"],
                center=center,
                size=size,
                class_id=int(t["class_id"]),
                intensity=tuple(float(x) for x in t["intensity"]),
            )
        )
    return Phantom(
        shape=tuple(int(d) for d in family["shape"]),
        primitives=tuple(prims),
        noise_sigma=float(family.get("noise_sigma", 0.0)),
        seed=int(rng.integers(0, 2**63 - 1)),
        classes=int(family["classes"]),
    )
