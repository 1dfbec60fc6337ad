"""Synthetic bone-like phantoms: (image, GT mask, degraded initial mask,
weak labels) tuples at desk scale.

Shapes are spheres, axis-randomized capsules (long-bone stand-ins) and
ellipsoids, rasterized analytically.  The image assigns a bright
foreground level to the shape, a dark level to background, then blurs
and adds noise.  A few distractor blobs with foreground-like intensity
are placed away from the region so that a bright-voxel prior alone
cannot explain the ground truth; they never intersect the region's
correction band.

Initial masks come from regime-driven non-uniform morphological
degradation (under / over / mixed); the emitted labels are derived from
GT by the synthetic rater, not from the regime.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .augment import smooth_field
from .errors import ConfigError
from .labels import CaseRecord, WeakLabelSet, append_record, derive_labels_from_gt, now_iso
from .morphology import dilate, morph_varying
from .volume import RegionMaskSet, Volume3, write_masks, write_volume

REGIMES = ("under", "over", "mixed")


@dataclass(frozen=True)
class DegradeConfig:
    regimes: tuple[str, ...] = REGIMES
    r_max: int = 2          # kept within the band radius so errors stay correctable
    field_factor: int = 6
    dice_range: tuple[float, float] = (0.75, 0.87)
    max_retries: int = 25

    def __post_init__(self):
        bad = set(self.regimes) - set(REGIMES)
        if bad:
            raise ConfigError(f"unknown degradation regimes {sorted(bad)}")
        if not 0 <= self.dice_range[0] <= self.dice_range[1] <= 1:
            raise ConfigError("dice_range must be ordered within [0, 1]")


@dataclass(frozen=True)
class PhantomConfig:
    dims: tuple[int, int, int] = (48, 48, 48)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    shapes: tuple[str, ...] = ("sphere", "capsule", "ellipsoid")
    fg_level: tuple[float, float] = (400.0, 30.0)   # mean, std of the bright level
    bg_level: tuple[float, float] = (50.0, 20.0)
    core_level: tuple[float, float] = (85.0, 10.0)  # dark marrow-like interior
    core_ratio: tuple[float, float] = (0.45, 0.55)  # core radius / shape radius
    with_core: bool = True
    blur_sigma: float = 0.4
    noise_sigma: float = 5.0
    margin: int = 4
    eta: int = 2                                     # band radius the margin must clear
    sphere_radius: tuple[float, float] = (8.0, 13.0)
    capsule_radius: tuple[float, float] = (6.0, 7.5)
    capsule_half_length: tuple[float, float] = (8.0, 10.5)
    ellipsoid_semiaxes: tuple[float, float] = (6.0, 13.0)
    n_distractors: int = 2
    distractor_radius: tuple[float, float] = (3.0, 4.5)
    distractor_gap: int = 4                          # min voxels from the dilated region
    distractor_level: tuple[float, float] = (210.0, 10.0)  # mid-bright, ambiguous prior
    degrade: DegradeConfig = field(default_factory=DegradeConfig)

    def __post_init__(self):
        if self.fg_level[0] <= self.bg_level[0]:
            raise ConfigError("foreground level must exceed background level")
        if min(self.dims) < 8:
            raise ConfigError("dims too small for a phantom")


def _coords(dims):
    return np.meshgrid(*(np.arange(d, dtype=np.float64) for d in dims), indexing="ij")


def _rasterize_sphere(dims, center, radius):
    xx, yy, zz = _coords(dims)
    d2 = (xx - center[0]) ** 2 + (yy - center[1]) ** 2 + (zz - center[2]) ** 2
    return d2 <= radius * radius


def _rasterize_ellipsoid(dims, center, semiaxes):
    xx, yy, zz = _coords(dims)
    v = ((xx - center[0]) / semiaxes[0]) ** 2 + ((yy - center[1]) / semiaxes[1]) ** 2 \
        + ((zz - center[2]) / semiaxes[2]) ** 2
    return v <= 1.0


def _rasterize_capsule(dims, center, axis, half_length, radius):
    # distance from each voxel to the segment center +- half_length*axis
    xx, yy, zz = _coords(dims)
    px = xx - center[0]
    py = yy - center[1]
    pz = zz - center[2]
    t = px * axis[0] + py * axis[1] + pz * axis[2]
    t = np.clip(t, -half_length, half_length)
    dx = px - t * axis[0]
    dy = py - t * axis[1]
    dz = pz - t * axis[2]
    return dx * dx + dy * dy + dz * dz <= radius * radius


def _random_unit_vector(rng):
    v = rng.standard_normal(3)
    n = np.linalg.norm(v)
    while n < 1e-8:
        v = rng.standard_normal(3)
        n = np.linalg.norm(v)
    return v / n


def _shape_extent(kind, params):
    if kind == "sphere":
        return params["radius"]
    if kind == "ellipsoid":
        return max(params["semiaxes"])
    return params["half_length"] + params["radius"]


def make_phantom(cfg: PhantomConfig, rng) -> tuple[Volume3, RegionMaskSet]:
    """Rasterize one random shape and render its CT-like image."""
    dims = cfg.dims
    center = (np.asarray(dims, dtype=np.float64) - 1) / 2
    kind = str(rng.choice(cfg.shapes))

    if kind == "sphere":
        params = {"radius": rng.uniform(*cfg.sphere_radius)}
        mask = _rasterize_sphere(dims, center, params["radius"])
    elif kind == "ellipsoid":
        params = {"semiaxes": rng.uniform(*cfg.ellipsoid_semiaxes, size=3)}
        mask = _rasterize_ellipsoid(dims, center, params["semiaxes"])
    elif kind == "capsule":
        params = {
            "radius": rng.uniform(*cfg.capsule_radius),
            "half_length": rng.uniform(*cfg.capsule_half_length),
            "axis": _random_unit_vector(rng),
        }
        mask = _rasterize_capsule(dims, center, params["axis"],
                                  params["half_length"], params["radius"])
    else:
        raise ConfigError(f"unknown shape {kind!r}")

    if _shape_extent(kind, params) + cfg.eta + cfg.margin > min(dims) / 2:
        raise ConfigError(
            f"{kind} of extent {_shape_extent(kind, params):.1f} plus eta={cfg.eta} "
            f"does not fit dims {dims} with a {cfg.margin}-voxel margin")

    fg = rng.normal(*cfg.fg_level)
    bg = rng.normal(*cfg.bg_level)
    levels = np.where(mask, fg, bg)

    # dark marrow-like core: part of the region's mask, dark in the image;
    # correction cues live at the outer boundary only, so keeping it is the
    # stability term's job
    if cfg.with_core:
        ratio = rng.uniform(*cfg.core_ratio)
        if kind == "sphere":
            core = _rasterize_sphere(dims, center, params["radius"] * ratio)
        elif kind == "ellipsoid":
            core = _rasterize_ellipsoid(dims, center,
                                        [s * ratio for s in params["semiaxes"]])
        else:
            core = _rasterize_capsule(dims, center, params["axis"],
                                      params["half_length"],
                                      params["radius"] * ratio)
        levels = np.where(core, rng.normal(*cfg.core_level), levels)

    # distractor blobs are bright-ish structures that are not part of the
    # region; keep them clear of the dilated region by distractor_gap
    forbidden = dilate(mask, cfg.eta + cfg.distractor_gap)
    placed = 0
    attempts = 0
    while placed < cfg.n_distractors and attempts < 50 * max(cfg.n_distractors, 1):
        attempts += 1
        r = rng.uniform(*cfg.distractor_radius)
        c = rng.uniform(np.ceil(r) + 1, np.asarray(dims) - np.ceil(r) - 2)
        blob = _rasterize_sphere(dims, c, r)
        if (blob & forbidden).any():
            continue
        levels = np.where(blob, rng.normal(*cfg.distractor_level), levels)
        placed += 1

    if cfg.blur_sigma > 0:
        levels = ndimage.gaussian_filter(levels, cfg.blur_sigma, mode="nearest")
    if cfg.noise_sigma > 0:
        levels = levels + rng.normal(0.0, cfg.noise_sigma, size=dims)

    img = Volume3(levels.astype(np.float32), cfg.spacing)
    gt = RegionMaskSet(mask.astype(np.uint8)[None], cfg.spacing)
    return img, gt


def degrade_mask(mask, regime: str, cfg: DegradeConfig, rng) -> np.ndarray:
    """One regime-driven non-uniform morphological corruption."""
    m = np.asarray(mask).astype(bool)
    f = smooth_field(m.shape, cfg.field_factor, rng)
    radii = np.minimum((f * (cfg.r_max + 1)).astype(np.int64), cfg.r_max)
    if regime == "under":
        return morph_varying(m, radii, "erode")
    if regime == "over":
        return morph_varying(m, radii, "dilate")
    split = smooth_field(m.shape, cfg.field_factor, rng) - 0.5
    return np.where(split >= 0,
                    morph_varying(m, radii, "dilate"),
                    morph_varying(m, radii, "erode"))


def axis_crop(img: Volume3, masks: RegionMaskSet, axis: int, keep: float, rng):
    """Crop a fraction of the grid along one axis (partial field of view)."""
    n = img.dims[axis]
    size = max(8, int(round(n * keep)))
    start = int(rng.integers(0, n - size + 1)) if size < n else 0
    sl = [slice(None)] * 3
    sl[axis] = slice(start, start + size)
    img_c = Volume3(img.data[tuple(sl)].copy(), img.spacing)
    masks_c = RegionMaskSet(masks.masks[(slice(None),) + tuple(sl)].copy(), masks.spacing)
    return img_c, masks_c


def make_case(cfg: PhantomConfig, rng, out_dir, manifest_path, case_id: str,
              degrade: bool = True, keep_gt: bool = True,
              crop: tuple[int, float] | None = None,
              write_labels: bool = True) -> CaseRecord:
    """Generate one case, write its volumes and append to the manifest.

    Degraded initial masks are resampled until their Dice against GT
    falls inside cfg.degrade.dice_range; labels come from the synthetic
    rater.  With degrade=False the initial mask is the GT and the labels
    are (5, 0).
    """
    from pathlib import Path

    out_dir = Path(out_dir)
    case_dir = out_dir / case_id
    case_dir.mkdir(parents=True, exist_ok=True)

    img, gt = make_phantom(cfg, rng)
    if crop is not None:
        img, gt = axis_crop(img, gt, crop[0], crop[1], rng)

    gt_mask = gt.region(0)
    if degrade:
        dcfg = cfg.degrade
        lo, hi = dcfg.dice_range
        init = None
        for _ in range(dcfg.max_retries):
            regime = str(rng.choice(dcfg.regimes))
            cand = degrade_mask(gt_mask, regime, dcfg, rng)
            if not cand.any():
                continue
            from .metrics import dice as dice_fn

            d = dice_fn(cand, gt_mask)
            if lo <= d <= hi:
                init = cand
                break
        if init is None:
            raise ConfigError(
                f"{case_id}: no degradation inside dice range {dcfg.dice_range} "
                f"after {dcfg.max_retries} attempts")
        q, l = derive_labels_from_gt(init, gt_mask)
    else:
        init = gt_mask.copy()
        q, l = 5, 0

    init_set = RegionMaskSet(init.astype(np.uint8)[None], cfg.spacing)

    write_volume(img, case_dir / "image.svol")
    write_masks(init_set, case_dir / "init.svol")
    gt_rel = None
    if keep_gt:
        write_masks(gt, case_dir / "gt.svol")
        gt_rel = f"{case_id}/gt.svol"

    record = CaseRecord(
        case_id=case_id,
        image=f"{case_id}/image.svol",
        init_masks=f"{case_id}/init.svol",
        gt_masks=gt_rel,
        labels=WeakLabelSet((q,), (l,)) if write_labels else None,
        annotator="synthetic-rater" if write_labels else "",
        timestamp=now_iso() if write_labels else "",
    )
    append_record(manifest_path, record)
    return record


@dataclass(frozen=True)
class DatasetSpec:
    n_train: int = 40
    n_val: int = 8
    n_test: int = 15
    seed: int = 0
    val_crop_prob: float = 0.5   # partial-FoV validation cases
    val_crop_keep: float = 0.65


def generate_dataset(cfg: PhantomConfig, spec: DatasetSpec, out_dir):
    """Write train/val/test splits with one manifest per split."""
    from pathlib import Path

    out_dir = Path(out_dir)
    manifests = {}
    split_salt = {"train": 1, "val": 2, "test": 3}
    for split, count in (("train", spec.n_train), ("val", spec.n_val), ("test", spec.n_test)):
        split_dir = out_dir / split
        split_dir.mkdir(parents=True, exist_ok=True)
        manifest = split_dir / "cases.jsonl"
        if manifest.exists():
            manifest.unlink()
        for i in range(count):
            rng = np.random.default_rng((spec.seed, split_salt[split], i))
            crop = None
            if split == "val" and rng.random() < spec.val_crop_prob:
                # crop along a random axis to emulate partial fields of view
                crop = (int(rng.integers(0, 3)), spec.val_crop_keep)
            case_cfg = cfg
            if crop is not None:
                # cropped capsules may touch the border; relax the fit check
                case_cfg = replace(cfg, shapes=("capsule",))
            make_case(case_cfg, rng, split_dir, manifest, f"{split}_{i:03d}", crop=crop)
        manifests[split] = manifest
    return manifests
