"""Weakly supervised 3D segmentation refinement from per-region quality
scores and error-type labels."""

from .volume import RegionMaskSet, Volume3, read_masks, read_volume, write_masks, write_volume

__all__ = [
    "RegionMaskSet",
    "Volume3",
    "read_masks",
    "read_volume",
    "write_masks",
    "write_volume",
]

__version__ = "0.1.0"
