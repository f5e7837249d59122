"""Volumes, view transforms, patch masking, phantoms, and file I/O."""

from .volume import INTENSITY, LABEL, Volume
from .views import (
    ALL_VIEW_SPECS,
    VIEWS,
    ViewSpec,
    apply_view,
    apply_view_array,
    apply_view_field,
    invert_view,
    invert_view_array,
    invert_view_field,
)
from .masking import GeometryError, MaskSpec, PatchMask, apply_mask, make_mask
from .phantom import Phantom, Primitive, default_family, gen_phantom, sample_phantom
from .io import (
    BadMagicError,
    TruncatedFileError,
    UnsupportedDtypeError,
    VolumeIOError,
    read_nifti,
    read_volume,
    write_volume,
)

__all__ = [
    "INTENSITY",
    "LABEL",
    "Volume",
    "VIEWS",
    "ALL_VIEW_SPECS",
    "ViewSpec",
    "apply_view",
    "apply_view_array",
    "apply_view_field",
    "invert_view",
    "invert_view_array",
    "invert_view_field",
    "MaskSpec",
    "PatchMask",
    "GeometryError",
    "make_mask",
    "apply_mask",
    "Phantom",
    "Primitive",
    "gen_phantom",
    "sample_phantom",
    "default_family",
    "VolumeIOError",
    "BadMagicError",
    "TruncatedFileError",
    "UnsupportedDtypeError",
    "read_volume",
    "write_volume",
    "read_nifti",
]
