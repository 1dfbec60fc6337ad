import numpy as np
import pytest

from score import volume
from score.errors import DataError, FormatError, IoError, TruncatedError
from score.volume import (
    HEADER_SIZE,
    RegionMaskSet,
    Volume3,
    index_of,
    offset_of,
    read_masks,
    read_volume,
    write_masks,
    write_volume,
)


def test_roundtrip_zero_volume(tmp_path):
    v = Volume3(np.zeros((2, 2, 2), dtype=np.float32), spacing=(1.0, 1.0, 1.0))
    path = tmp_path / "v.svol"
    write_volume(v, path)
    r = read_volume(path)
    assert r.dims == (2, 2, 2)
    assert r.spacing == v.spacing
    assert np.array_equal(r.data, v.data)


def test_x_fastest_order(tmp_path):
    # values 0..23 laid out by flat offset; voxel (1,0,0) must hold 1.0
    dims = (4, 3, 2)
    flat = np.arange(24, dtype=np.float32)
    data = flat.reshape(dims, order="F")
    v = Volume3(data, spacing=(0.5, 1.0, 2.0))
    path = tmp_path / "v.svol"
    write_volume(v, path)
    r = read_volume(path)
    assert np.array_equal(r.data, data)
    assert r.data[1, 0, 0] == 1.0
    # every voxel agrees with the offset formula
    for x in range(4):
        for y in range(3):
            for z in range(2):
                assert r.data[x, y, z] == flat[offset_of(x, y, z, dims)]


def test_header_is_32_bytes(tmp_path):
    # counting header fields: 4 magic + 2 version + 1 kind + 1 K + 12 dims + 12 spacing
    assert HEADER_SIZE == 4 + 2 + 1 + 1 + 12 + 12 == 32
    v = Volume3(np.full((1, 1, 1), 3.5, dtype=np.float32))
    path = tmp_path / "one.svol"
    write_volume(v, path)
    raw = path.read_bytes()
    assert len(raw) == HEADER_SIZE + 4
    assert raw[:4] == b"SVOL"
    assert np.frombuffer(raw[HEADER_SIZE:], dtype="<f4")[0] == 3.5


def test_roundtrip_random(tmp_path):
    rng = np.random.default_rng(7)
    data = rng.standard_normal((8, 8, 8)).astype(np.float32)
    v = Volume3(data, spacing=(0.23, 0.23, 0.3))
    path = tmp_path / "r.svol"
    write_volume(v, path)
    r = read_volume(path)
    assert r.data.tobytes() == v.data.tobytes()
    assert r.spacing == pytest.approx(v.spacing)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.svol"
    v = Volume3(np.zeros((2, 2, 2), dtype=np.float32))
    write_volume(v, path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_volume(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.svol"
    write_volume(Volume3(np.zeros((3, 3, 3), dtype=np.float32)), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(TruncatedError):
        read_volume(path)


def test_nan_payload_rejected(tmp_path):
    path = tmp_path / "n.svol"
    write_volume(Volume3(np.zeros((2, 2, 2), dtype=np.float32)), path)
    raw = bytearray(path.read_bytes())
    raw[HEADER_SIZE:HEADER_SIZE + 4] = np.float32("nan").tobytes()
    path.write_bytes(bytes(raw))
    with pytest.raises(DataError):
        read_volume(path)


def test_nonwritable_path():
    v = Volume3(np.zeros((1, 1, 1), dtype=np.float32))
    with pytest.raises(IoError):
        write_volume(v, "/nonexistent-dir/v.svol")


def test_masks_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    masks = (rng.random((2, 4, 4, 4)) > 0.5).astype(np.uint8)
    ms = RegionMaskSet(masks, spacing=(1.0, 1.0, 1.5))
    path = tmp_path / "m.svol"
    write_masks(ms, path)
    r = read_masks(path)
    assert r.K == 2
    assert np.array_equal(r.masks, masks)
    assert r.spacing == pytest.approx(ms.spacing)


def test_masks_bad_byte(tmp_path):
    path = tmp_path / "m.svol"
    write_masks(RegionMaskSet(np.ones((1, 2, 2, 2), dtype=np.uint8)), path)
    raw = bytearray(path.read_bytes())
    raw[HEADER_SIZE + 3] = 7
    path.write_bytes(bytes(raw))
    with pytest.raises(DataError):
        read_masks(path)


def test_all_ones_mask_payload(tmp_path):
    path = tmp_path / "m.svol"
    write_masks(RegionMaskSet(np.ones((1, 2, 2, 2), dtype=np.uint8)), path)
    raw = path.read_bytes()
    assert raw[HEADER_SIZE:] == b"\x01" * 8


def test_kind_mismatch(tmp_path):
    vp = tmp_path / "v.svol"
    mp = tmp_path / "m.svol"
    write_volume(Volume3(np.zeros((2, 2, 2), dtype=np.float32)), vp)
    write_masks(RegionMaskSet(np.zeros((1, 2, 2, 2), dtype=np.uint8)), mp)
    with pytest.raises(FormatError):
        read_masks(vp)
    with pytest.raises(FormatError):
        read_volume(mp)


def test_offset_bijection():
    dims = (4, 3, 2)
    seen = set()
    for x in range(4):
        for y in range(3):
            for z in range(2):
                off = offset_of(x, y, z, dims)
                assert index_of(off, dims) == (x, y, z)
                seen.add(off)
    assert seen == set(range(24))


def test_construction_invariants():
    with pytest.raises(DataError):
        Volume3(np.array([[[np.nan]]], dtype=np.float32))
    with pytest.raises(DataError):
        Volume3(np.zeros((2, 2, 2)), spacing=(0.0, 1.0, 1.0))
    with pytest.raises(DataError):
        RegionMaskSet(np.full((1, 2, 2, 2), 2, dtype=np.uint8))
    v = Volume3(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        v.data[0, 0, 0] = 1.0  # immutable after construction


def test_read_header(tmp_path):
    path = tmp_path / "h.svol"
    write_masks(RegionMaskSet(np.zeros((3, 2, 4, 5), dtype=np.uint8), spacing=(2.0, 1.0, 0.5)), path)
    hdr = volume.read_header(path)
    assert hdr.kind == volume.KIND_MASKS
    assert hdr.K == 3
    assert hdr.dims == (2, 4, 5)
    assert hdr.spacing == pytest.approx((2.0, 1.0, 0.5))
