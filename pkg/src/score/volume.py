"""Core 3D volume and mask types plus bit-exact SVOL file IO.

Grid convention used everywhere in this package: arrays are indexed
``[x, y, z]`` and the serialized payload is x-fastest, i.e. the flat
offset of voxel (x, y, z) is ``x + nx * (y + ny * z)`` which equals
Fortran-order ravel of an (nx, ny, nz) array.

SVOL layout (little-endian):

    magic   4 bytes  b"SVOL"
    version u16      1
    kind    u8       0 = float volume, 1 = mask set
    K       u8       region count (1 for float volumes)
    nx,ny,nz u32 x3
    sx,sy,sz f32 x3  spacing in millimeters
    payload          f32 * nx*ny*nz          (kind 0)
                     u8  * nx*ny*nz * K      (kind 1, concatenated regions)

The header is exactly 32 bytes.  Payloads round-trip bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FormatError, IoError, TruncatedError

MAGIC = b"SVOL"
VERSION = 1
KIND_VOLUME = 0
KIND_MASKS = 1
HEADER = struct.Struct("<4sHBBIIIfff")
HEADER_SIZE = HEADER.size  # 32


def offset_of(x: int, y: int, z: int, dims: tuple[int, int, int]) -> int:
    """Flat payload offset of voxel (x, y, z)."""
    nx, ny, nz = dims
    if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
        raise IndexError(f"voxel ({x},{y},{z}) outside grid {dims}")
    return x + nx * (y + ny * z)


def index_of(offset: int, dims: tuple[int, int, int]) -> tuple[int, int, int]:
    """Inverse of offset_of."""
    nx, ny, nz = dims
    if not 0 <= offset < nx * ny * nz:
        raise IndexError(f"offset {offset} outside grid {dims}")
    x = offset % nx
    rest = offset // nx
    return x, rest % ny, rest // ny


def _check_spacing(spacing):
    s = tuple(float(v) for v in spacing)
    if len(s) != 3 or any(not np.isfinite(v) or v <= 0 for v in s):
        raise DataError(f"spacing must be three positive reals, got {spacing}")
    return s


@dataclass(frozen=True)
class Volume3:
    """A 3D scalar grid with physical spacing.  Immutable after construction."""

    data: np.ndarray  # (nx, ny, nz) float32
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise DataError(f"volume data must be 3D non-empty, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise DataError("volume contains NaN or Inf")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz


@dataclass(frozen=True)
class RegionMaskSet:
    """K binary masks over a shared grid.  Values are exactly 0 or 1."""

    masks: np.ndarray  # (K, nx, ny, nz) uint8
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.masks, dtype=np.uint8)
        if arr.ndim != 4 or arr.shape[0] < 1 or min(arr.shape[1:]) < 1:
            raise DataError(f"masks must be (K, nx, ny, nz) with K >= 1, got {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise DataError("mask values must be exactly 0 or 1")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "masks", arr)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def K(self) -> int:
        return self.masks.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.masks.shape[1:]

    def region(self, k: int) -> np.ndarray:
        """Boolean view of region k (0-based)."""
        return self.masks[k].astype(bool)


@dataclass(frozen=True)
class SvolHeader:
    kind: int
    K: int
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    payload_offset: int = field(default=HEADER_SIZE)


def read_header(path) -> SvolHeader:
    """Parse and validate an SVOL header without reading the payload."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read(HEADER_SIZE)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"file shorter than the {HEADER_SIZE}-byte header")
    magic, version, kind, k, nx, ny, nz, sx, sy, sz = HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if kind not in (KIND_VOLUME, KIND_MASKS):
        raise FormatError(f"unknown kind {kind}")
    if kind == KIND_VOLUME and k != 1:
        raise FormatError(f"float volumes must have K=1, got {k}")
    if k < 1:
        raise FormatError("K must be >= 1")
    if min(nx, ny, nz) < 1:
        raise FormatError(f"dims must be positive, got {(nx, ny, nz)}")
    if any(not np.isfinite(s) or s <= 0 for s in (sx, sy, sz)):
        raise FormatError(f"spacing must be positive, got {(sx, sy, sz)}")
    return SvolHeader(kind, k, (nx, ny, nz), (sx, sy, sz))


def read_volume(path) -> Volume3:
    hdr = read_header(path)
    if hdr.kind != KIND_VOLUME:
        raise FormatError("file holds a mask set, not a float volume")
    nx, ny, nz = hdr.dims
    try:
        with open(path, "rb") as fh:
            fh.seek(HEADER_SIZE)
            payload = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    expected = nx * ny * nz * 4
    if len(payload) != expected:
        raise TruncatedError(f"payload is {len(payload)} bytes, expected {expected}")
    flat = np.frombuffer(payload, dtype="<f4")
    if not np.isfinite(flat).all():
        raise DataError("payload contains NaN or Inf")
    data = flat.reshape((nx, ny, nz), order="F")
    return Volume3(data=data, spacing=hdr.spacing)


def write_volume(vol: Volume3, path) -> None:
    nx, ny, nz = vol.dims
    header = HEADER.pack(MAGIC, VERSION, KIND_VOLUME, 1, nx, ny, nz, *vol.spacing)
    payload = np.asarray(vol.data, dtype="<f4").ravel(order="F").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_masks(path) -> RegionMaskSet:
    hdr = read_header(path)
    if hdr.kind != KIND_MASKS:
        raise FormatError("file holds a float volume, not a mask set")
    nx, ny, nz = hdr.dims
    try:
        with open(path, "rb") as fh:
            fh.seek(HEADER_SIZE)
            payload = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    expected = nx * ny * nz * hdr.K
    if len(payload) != expected:
        raise TruncatedError(f"payload is {len(payload)} bytes, expected {expected}")
    flat = np.frombuffer(payload, dtype=np.uint8)
    if not np.isin(flat, (0, 1)).all():
        bad = int(flat[~np.isin(flat, (0, 1))][0])
        raise DataError(f"mask payload byte {bad} is not 0 or 1")
    # regions are concatenated, each serialized x-fastest
    n = nx * ny * nz
    masks = np.stack(
        [flat[i * n:(i + 1) * n].reshape((nx, ny, nz), order="F") for i in range(hdr.K)]
    )
    return RegionMaskSet(masks=masks, spacing=hdr.spacing)


def write_masks(ms: RegionMaskSet, path) -> None:
    nx, ny, nz = ms.dims
    header = HEADER.pack(MAGIC, VERSION, KIND_MASKS, ms.K, nx, ny, nz, *ms.spacing)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            for k in range(ms.K):
                fh.write(np.asarray(ms.masks[k], dtype=np.uint8).ravel(order="F").tobytes())
    except OSError as exc:
        raise IoError(str(exc)) from exc


def same_grid(a, b) -> bool:
    """True when two volumes/mask sets share dims and spacing."""
    return a.dims == b.dims and a.spacing == b.spacing
