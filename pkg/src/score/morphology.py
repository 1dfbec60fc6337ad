"""Binary 3D morphology with discrete Euclidean ball structuring elements.

A ball of radius r contains every integer offset d with ||d||_2 <= r.
Voxels outside the grid count as background, so erosion shrinks masks
that touch the border.  Radii are in voxel units.

Erosion and dilation are computed through exact Euclidean distance
transforms: a voxel survives erosion by r iff its distance to the
nearest background voxel exceeds r, and dilation by r reaches every
voxel within distance r of the mask.  Squared distances are integers,
so comparisons use a 0.5 margin and are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import GridError, LabelError

VALID_LABELS = (-1, 0, 1, 2)


@dataclass(frozen=True)
class RegionBands:
    """Stability interior and correction band for one region."""

    stab: np.ndarray  # bool (nx, ny, nz)
    corr: np.ndarray  # bool (nx, ny, nz)


def _as_bool(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.dtype != bool:
        m = m.astype(bool)
    return m


def erode(mask, eta: int) -> np.ndarray:
    """Voxels whose entire radius-eta ball lies inside the mask."""
    m = _as_bool(mask)
    if eta < 0:
        raise ValueError("eta must be >= 0")
    if eta == 0:
        return m.copy()
    if not m.any():
        return np.zeros_like(m)
    # pad with background so out-of-grid counts as outside
    dt2 = ndimage.distance_transform_edt(np.pad(m, 1)) ** 2
    return dt2[1:-1, 1:-1, 1:-1] > eta * eta + 0.5


def dilate(mask, eta: int) -> np.ndarray:
    """Voxels whose radius-eta ball intersects the mask."""
    m = _as_bool(mask)
    if eta < 0:
        raise ValueError("eta must be >= 0")
    if eta == 0 or not m.any():
        return m.copy()
    dt2 = ndimage.distance_transform_edt(~m) ** 2
    return dt2 < eta * eta + 0.5


def make_bands(mask, error_label: int, eta: int) -> RegionBands:
    """Stability interior and boundary correction band for one region.

    For a region flagged with any error the interior is the eroded mask;
    for a clean region (label 0) the whole mask is kept stable.  The
    correction band is always dilate(mask) minus erode(mask).
    """
    if error_label not in VALID_LABELS:
        raise LabelError(f"error label must be one of {VALID_LABELS}, got {error_label}")
    m = _as_bool(mask)
    eroded = erode(m, eta)
    corr = dilate(m, eta) & ~eroded
    stab = m.copy() if error_label == 0 else eroded
    return RegionBands(stab=stab, corr=corr)


def morph_varying(mask, radius_field, mode: str) -> np.ndarray:
    """Erosion/dilation with a per-voxel integer radius field.

    dilate: union over mask voxels v of ball(v, field[v]).
    erode:  voxel v survives iff ball(v, field[v]) lies inside the mask,
            i.e. the radius is taken at the output voxel.
    A constant field reduces exactly to erode/dilate with that radius.
    """
    m = _as_bool(mask)
    field = np.asarray(radius_field)
    if field.shape != m.shape:
        raise GridError(f"radius field shape {field.shape} != mask shape {m.shape}")
    if not np.issubdtype(field.dtype, np.integer):
        raise ValueError("radius field must be integer-valued")
    if field.min() < 0:
        raise ValueError("radius field must be non-negative")
    if mode not in ("erode", "dilate"):
        raise ValueError(f"mode must be 'erode' or 'dilate', got {mode!r}")

    if mode == "erode":
        if not m.any():
            return np.zeros_like(m)
        dt2 = ndimage.distance_transform_edt(np.pad(m, 1))[1:-1, 1:-1, 1:-1] ** 2
        return dt2 > field.astype(np.float64) ** 2 + 0.5

    out = np.zeros_like(m)
    for r in np.unique(field[m]):
        out |= dilate(m & (field == r), int(r))
    return out
