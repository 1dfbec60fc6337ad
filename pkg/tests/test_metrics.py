import numpy as np
import pytest

from score.errors import GridError, RegionCountError, UndefinedMetric
from score.metrics import dice, evaluate_case, hd95, surface
from score.morphology import dilate, erode
from score.volume import RegionMaskSet

from oracles import dice_oracle, hd95_oracle, surface_oracle


def cube(n, lo, hi):
    m = np.zeros((n, n, n), dtype=bool)
    m[lo:hi, lo:hi, lo:hi] = True
    return m


def test_dice_identity_disjoint():
    a = cube(8, 1, 5)
    assert dice(a, a) == 1.0
    b = cube(8, 5, 8)
    assert dice(a, b) == 0.0
    assert dice(np.zeros_like(a), np.zeros_like(a)) == 1.0


def test_dice_shifted_cube():
    a = cube(10, 2, 6)  # 4^3
    b = np.roll(a, 2, axis=0)
    assert dice(a, b) == pytest.approx(2 * (2 * 4 * 4) / (64 + 64))


def test_dice_symmetry_random():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        a = rng.random((9, 9, 9)) > 0.5
        b = rng.random((9, 9, 9)) > 0.5
        assert dice(a, b) == dice(b, a) == pytest.approx(dice_oracle(a, b))


def test_surface_matches_oracle():
    for seed in range(8):
        rng = np.random.default_rng(seed)
        m = rng.random((8, 8, 8)) > 0.4
        assert np.array_equal(surface(m), surface_oracle(m))
    # border voxels of a full mask are surface
    full = np.ones((4, 4, 4), dtype=bool)
    s = surface(full)
    assert s[0, 0, 0] and not s[1, 1, 1]


def test_hd95_identical_masks():
    a = cube(8, 2, 6)
    assert hd95(a, a) == 0.0


def test_hd95_two_voxels():
    a = np.zeros((8, 4, 4), dtype=bool)
    b = np.zeros((8, 4, 4), dtype=bool)
    a[1, 2, 2] = True
    b[4, 2, 2] = True
    assert hd95(a, b, (1.0, 1.0, 1.0)) == pytest.approx(3.0)
    # anisotropic spacing scales the axis
    assert hd95(a, b, (0.5, 1.0, 1.0)) == pytest.approx(1.5)


def test_hd95_cube_vs_dilated():
    a = cube(12, 3, 9)
    b = dilate(a, 1)
    got = hd95(a, b, (1.0, 1.0, 1.0))
    assert got == pytest.approx(hd95_oracle(a, b, (1.0, 1.0, 1.0)), abs=1e-9)


def test_hd95_random_pairs_vs_oracle():
    checked = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(6, 13))
        a = rng.random((n, n, n)) > rng.uniform(0.4, 0.7)
        b = rng.random((n, n, n)) > rng.uniform(0.4, 0.7)
        if not a.any() or not b.any():
            continue
        spacing = tuple(rng.uniform(0.3, 2.0, 3))
        assert hd95(a, b, spacing) == pytest.approx(
            hd95_oracle(a, b, spacing), abs=1e-9), seed
        assert hd95(a, b, spacing) == pytest.approx(hd95(b, a, spacing), abs=1e-12)
        checked += 1
    assert checked >= 45


def test_hd95_brute_and_edt_paths_agree(monkeypatch):
    import score.metrics as metrics_mod

    rng = np.random.default_rng(123)
    a = rng.random((14, 14, 14)) > 0.6
    b = rng.random((14, 14, 14)) > 0.6
    spacing = (0.7, 1.1, 1.3)
    brute = hd95(a, b, spacing)
    monkeypatch.setattr(metrics_mod, "BRUTE_FORCE_LIMIT", 0)
    edt = hd95(a, b, spacing)
    assert brute == pytest.approx(edt, abs=1e-9)


def test_hd95_empty_mask():
    a = cube(6, 1, 4)
    with pytest.raises(UndefinedMetric):
        hd95(a, np.zeros_like(a))


def test_hd95_monotone_under_erosion():
    m = cube(16, 3, 13)
    prev = -1.0
    for r in (1, 2, 3):
        h = hd95(m, erode(m, r))
        assert h >= prev
        prev = h


def test_evaluate_case_identity():
    masks = np.stack([cube(8, 1, 5), cube(8, 4, 8)]).astype(np.uint8)
    ms = RegionMaskSet(masks, spacing=(1.0, 1.0, 2.0))
    res = evaluate_case(ms, ms)
    for r in res.regions:
        assert r.dice == 1.0 and r.hd95_mm == 0.0
        assert r.vol_pred_mm3 == r.vol_ref_mm3 > 0


def test_evaluate_case_soft_binarization():
    ref = RegionMaskSet(cube(8, 2, 6).astype(np.uint8)[None])
    soft = np.where(cube(8, 2, 6), 0.6, 0.4)[None]
    res = evaluate_case(soft, ref)
    assert res.regions[0].dice == 1.0


def test_evaluate_case_volumes_and_errors():
    ref = RegionMaskSet(cube(8, 2, 6).astype(np.uint8)[None], spacing=(2.0, 1.0, 1.0))
    pred = RegionMaskSet(erode(cube(8, 2, 6), 1).astype(np.uint8)[None], spacing=(2.0, 1.0, 1.0))
    res = evaluate_case(pred, ref)
    r = res.regions[0]
    assert r.vol_ref_mm3 == 64 * 2.0
    assert r.vol_pred_mm3 == int(erode(cube(8, 2, 6), 1).sum()) * 2.0
    assert r.dice == pytest.approx(dice_oracle(erode(cube(8, 2, 6), 1), cube(8, 2, 6)))

    with pytest.raises(RegionCountError):
        evaluate_case(RegionMaskSet(np.zeros((2, 8, 8, 8), dtype=np.uint8),
                                    spacing=(2.0, 1.0, 1.0)), ref)
    with pytest.raises(GridError):
        evaluate_case(RegionMaskSet(cube(8, 2, 6).astype(np.uint8)[None]), ref)


def test_evaluate_case_empty_pred_hd95_undefined():
    ref = RegionMaskSet(cube(6, 1, 4).astype(np.uint8)[None])
    pred = RegionMaskSet(np.zeros((1, 6, 6, 6), dtype=np.uint8))
    res = evaluate_case(pred, ref)
    assert res.regions[0].hd95_mm is None
    assert res.regions[0].dice == 0.0
