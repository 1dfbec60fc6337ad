"""Training-time augmentation.

Intensity perturbations (blur, noise, gamma), one shared affine
transform with optional left-right flip, and score-guided non-uniform
morphological degradation whose per-voxel radii come from a smooth
random field.  Everything is a pure function of (inputs, config, rng),
so a fixed seed reproduces the augmentation exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import LabelError
from .morphology import morph_varying
from .volume import Volume3


@dataclass(frozen=True)
class AugmentConfig:
    blur_sigma_range: tuple[float, float] = (0.0, 1.5)     # voxels
    noise_sigma_range: tuple[float, float] = (0.0, 0.1)    # fraction of intensity range
    gamma_range: tuple[float, float] = (0.7, 1.5)
    rot_deg: float = 10.0
    scale_range: tuple[float, float] = (0.9, 1.1)
    translate_vox: float = 5.0
    flip_lr_prob: float = 0.5
    intensity_prob: float = 0.5       # per-perturbation application probability
    morph_r_max: int = 3
    field_smoothness: int = 4         # low-res grid factor of the smooth field
    score_delta: float = 0.02         # relative volume change per score point

    def __post_init__(self):
        for name in ("blur_sigma_range", "noise_sigma_range", "gamma_range", "scale_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is not well-ordered: {(lo, hi)}")
        if not 0 <= self.flip_lr_prob <= 1 or not 0 <= self.intensity_prob <= 1:
            raise ValueError("probabilities must be in [0, 1]")
        if self.morph_r_max < 0:
            raise ValueError("morph_r_max must be >= 0")
        if self.field_smoothness < 1:
            raise ValueError("field_smoothness must be >= 1")


def smooth_field(dims, factor: int, rng) -> np.ndarray:
    """Spatially correlated random field in [0, 1].

    Uniform noise on a ceil(dims/factor) grid, trilinearly upsampled,
    Gaussian-smoothed with sigma = factor/2, then min-max renormalized.
    """
    low = tuple(max(1, math.ceil(d / factor)) for d in dims)
    noise = rng.random(low)
    coords = np.meshgrid(
        *(np.linspace(0, low[i] - 1, dims[i]) for i in range(3)), indexing="ij"
    )
    up = ndimage.map_coordinates(noise, np.stack(coords), order=1, mode="nearest")
    sm = ndimage.gaussian_filter(up, sigma=factor / 2, mode="nearest")
    lo, hi = sm.min(), sm.max()
    if hi <= lo:
        return np.full(dims, 0.5)
    return (sm - lo) / (hi - lo)


def _renormalized_blur(data, sigma):
    # reflect padding folds all kernel mass back inside the grid, so every
    # input voxel keeps total weight 1 and the volume mean is preserved
    return ndimage.gaussian_filter(data, sigma, mode="reflect")


def intensity_augment(img: Volume3, cfg: AugmentConfig, rng) -> Volume3:
    """Blur, noise and gamma, each applied with probability intensity_prob."""
    data = img.data.astype(np.float64)
    if rng.random() < cfg.intensity_prob:
        sigma = rng.uniform(*cfg.blur_sigma_range)
        if sigma > 0:
            data = _renormalized_blur(data, sigma)
    if rng.random() < cfg.intensity_prob:
        frac = rng.uniform(*cfg.noise_sigma_range)
        span = float(data.max() - data.min())
        if frac > 0 and span > 0:
            data = data + rng.normal(0.0, frac * span, size=data.shape)
    if rng.random() < cfg.intensity_prob:
        gamma = rng.uniform(*cfg.gamma_range)
        lo, hi = float(data.min()), float(data.max())
        if gamma != 1.0 and hi > lo:
            data = ((data - lo) / (hi - lo)) ** gamma * (hi - lo) + lo
    return Volume3(data.astype(np.float32), img.spacing)


@dataclass(frozen=True)
class AffineParams:
    """One sampled spatial transform, shared by every channel of a case."""

    angles_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: float = 1.0
    translate: tuple[float, float, float] = (0.0, 0.0, 0.0)
    flip_x: bool = False


def draw_affine_params(cfg: AugmentConfig, rng) -> AffineParams:
    return AffineParams(
        angles_deg=tuple(rng.uniform(-cfg.rot_deg, cfg.rot_deg, size=3)),
        scale=float(rng.uniform(*cfg.scale_range)),
        translate=tuple(rng.uniform(-cfg.translate_vox, cfg.translate_vox, size=3)),
        flip_x=bool(rng.random() < cfg.flip_lr_prob),
    )


def _rotation_matrix(angles_deg):
    ax, ay, az = (math.radians(a) for a in angles_deg)
    cx, sx = math.cos(ax), math.sin(ax)
    cy, sy = math.cos(ay), math.sin(ay)
    cz, sz = math.cos(az), math.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def _resample(data, matrix_inv, offset, order, cval):
    return ndimage.affine_transform(
        data, matrix_inv, offset=offset, order=order, mode="constant", cval=cval,
        prefilter=False,
    )


def apply_affine(img, masks, prior, params: AffineParams):
    """Resample channels under one transform about the volume center.

    img and prior are interpolated trilinearly, masks nearest-neighbor.
    Out-of-grid samples fill with the image minimum, 0 for prior, 0 for
    masks.  Any of the three inputs may be None.
    """
    if img is not None:
        dims = img.dims
    elif prior is not None:
        dims = np.asarray(prior).shape
    else:
        dims = np.asarray(masks).shape[1:]
    center = (np.asarray(dims, dtype=np.float64) - 1) / 2

    fwd = _rotation_matrix(params.angles_deg) * params.scale
    inv = np.linalg.inv(fwd)
    # sampling map: input_coord = inv @ (out - center - t) + center
    offset = center - inv @ (center + np.asarray(params.translate))

    def go(data, order, cval):
        out = _resample(data.astype(np.float64), inv, offset, order, cval)
        if params.flip_x:
            out = out[::-1].copy()
        return out

    img_out = None
    if img is not None:
        cval = float(img.data.min())
        img_out = Volume3(go(img.data, 1, cval).astype(np.float32), img.spacing)
    prior_out = None
    if prior is not None:
        prior_out = np.clip(go(np.asarray(prior), 1, 0.0), 0.0, 1.0)
    masks_out = None
    if masks is not None:
        arr = np.asarray(masks)
        masks_out = np.stack([go(arr[k], 0, 0.0) for k in range(arr.shape[0])])
        masks_out = (masks_out > 0.5).astype(np.uint8)
    return img_out, masks_out, prior_out


def spatial_augment(img, masks, prior, cfg: AugmentConfig, rng):
    """Draw one affine + flip and apply it to all channels consistently."""
    params = draw_affine_params(cfg, rng)
    return apply_affine(img, masks, prior, params)


def morph_augment(mask, q: int, error_label: int, cfg: AugmentConfig, rng):
    """Degrade one region's mask according to its error direction.

    Under-segmentations are eroded further, over-segmentations dilated,
    mixed regions split by the sign of a second smooth field.  The score
    drops one point per score_delta of relative volume change.
    """
    if error_label not in (-1, 1, 2):
        raise LabelError(f"morphological degradation needs an error label in {{-1,1,2}}, "
                         f"got {error_label}")
    m = np.asarray(mask).astype(bool)
    vol0 = int(m.sum())
    if vol0 == 0:
        return m.copy(), q

    f = smooth_field(m.shape, cfg.field_smoothness, rng)
    radii = np.minimum((f * (cfg.morph_r_max + 1)).astype(np.int64), cfg.morph_r_max)
    if error_label == -1:
        out = morph_varying(m, radii, "erode")
    elif error_label == 1:
        out = morph_varying(m, radii, "dilate")
    else:
        split = smooth_field(m.shape, cfg.field_smoothness, rng) - 0.5
        eroded = morph_varying(m, radii, "erode")
        dilated = morph_varying(m, radii, "dilate")
        out = np.where(split >= 0, dilated, eroded)

    rho = abs(int(out.sum()) - vol0) / vol0
    q_new = max(0, q - math.ceil(rho / cfg.score_delta))
    return out, q_new
