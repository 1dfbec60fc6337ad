"""Three-part refinement loss driven by per-region scores and error labels.

All terms average over the K regions and normalize each region by the
size of its active voxel set:

  stability:   mean_k 1/|stab_k| sum_{v in stab_k} -T_kv * log(Y_kv)
  expansive:   mean_k 1/|corr_k| sum_{v in corr_k} -w_k * P_v * log(Y_kv)
               (only regions labeled under-segmented or mixed: l in {-1, 2})
  subtractive: mean_k 1/|corr_k| sum_{v in corr_k} -w_k * (1-P_v) * log(1-Y_kv)
               (only regions labeled over-segmented or mixed: l in {1, 2})

where Y is the refiner's per-region probability output (clamped to
[eps, 1-eps] before logs), T the initial mask, P the boundary prior and
w_k = (5-q_k)/5.  Regions with an empty active set contribute zero.
Gradients are with respect to Y and are exact for unclamped voxels.

The optional stab_background mode extends the stability domain with the
far background (everything outside dilate(T_k, eta)) using the full
two-term cross-entropy, which additionally pins new foreground far from
the region.  Off by default.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridError, LabelError
from .labels import WeakLabelSet, validate
from .morphology import RegionBands, dilate, make_bands

EXPAND_LABELS = (-1, 2)
SHRINK_LABELS = (1, 2)


@dataclass(frozen=True)
class LossWeights:
    lambda_stab: float = 5.0
    lambda_plus: float = 1.0
    lambda_minus: float = 1.0
    eta: int = 2
    eps: float = 1e-7
    stab_background: bool = False

    def __post_init__(self):
        if min(self.lambda_stab, self.lambda_plus, self.lambda_minus) < 0:
            raise ValueError("loss coefficients must be non-negative")
        if not 0 < self.eps < 0.5:
            raise ValueError("eps must be in (0, 0.5)")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")


@dataclass
class LossReport:
    total: float
    stab: float
    plus: float
    minus: float
    per_region: list[dict] = field(default_factory=list)
    grad: np.ndarray | None = None  # dL/dY, shape (K, nx, ny, nz)


def _check_grids(y, masks, prior=None):
    if y.shape != masks.shape:
        raise GridError(f"prediction shape {y.shape} != mask shape {masks.shape}")
    if prior is not None and prior.shape != y.shape[1:]:
        raise GridError(f"prior shape {prior.shape} != grid {y.shape[1:]}")


def _clamped(y, eps):
    return np.clip(np.asarray(y, dtype=np.float64), eps, 1.0 - eps)


def loss_stab(y, masks, bands: list[RegionBands], eps: float = 1e-7,
              stab_background: bool = False, eta: int = 2):
    """Stability term and its gradient with respect to y."""
    masks = np.asarray(masks)
    _check_grids(np.asarray(y), masks)
    K = masks.shape[0]
    yc = _clamped(y, eps)
    grad = np.zeros_like(yc)
    total = 0.0
    terms = []
    for k in range(K):
        t = masks[k].astype(np.float64)
        dom = bands[k].stab
        if stab_background:
            dom = dom | ~dilate(masks[k], eta)
        n = int(dom.sum())
        if n == 0:
            terms.append(0.0)
            continue
        yk = yc[k][dom]
        tk = t[dom]
        term = float(np.sum(-tk * np.log(yk)))
        gk = -tk / yk
        if stab_background:
            term += float(np.sum(-(1.0 - tk) * np.log(1.0 - yk)))
            gk = gk + (1.0 - tk) / (1.0 - yk)
        term /= n
        grad[k][dom] = gk / (K * n)
        total += term
        terms.append(term)
    return total / K, grad, terms


def loss_plus(y, prior, bands: list[RegionBands], labels: WeakLabelSet, eps: float = 1e-7):
    """Expansive term: pushes probabilities up in the correction band of
    under-segmented regions, weighted by the boundary prior."""
    y = np.asarray(y)
    p = np.asarray(prior, dtype=np.float64)
    _check_grids(y, y, p)
    K = y.shape[0]
    if labels.K != K:
        raise LabelError(f"labels have {labels.K} regions, prediction has {K}")
    yc = _clamped(y, eps)
    w = labels.weights()
    grad = np.zeros_like(yc)
    total = 0.0
    terms = []
    for k in range(K):
        if labels.error_labels[k] not in EXPAND_LABELS:
            terms.append(0.0)
            continue
        dom = bands[k].corr
        n = int(dom.sum())
        if n == 0 or w[k] == 0.0:
            terms.append(0.0)
            continue
        pk = p[dom]
        yk = yc[k][dom]
        term = float(np.sum(-w[k] * pk * np.log(yk))) / n
        grad[k][dom] = -w[k] * pk / (yk * K * n)
        total += term
        terms.append(term)
    return total / K, grad, terms


def loss_minus(y, prior, bands: list[RegionBands], labels: WeakLabelSet, eps: float = 1e-7):
    """Subtractive term: pushes probabilities down in the correction band
    of over-segmented regions, away from contours (weighted by 1-P)."""
    y = np.asarray(y)
    p = np.asarray(prior, dtype=np.float64)
    _check_grids(y, y, p)
    K = y.shape[0]
    if labels.K != K:
        raise LabelError(f"labels have {labels.K} regions, prediction has {K}")
    yc = _clamped(y, eps)
    w = labels.weights()
    grad = np.zeros_like(yc)
    total = 0.0
    terms = []
    for k in range(K):
        if labels.error_labels[k] not in SHRINK_LABELS:
            terms.append(0.0)
            continue
        dom = bands[k].corr
        n = int(dom.sum())
        if n == 0 or w[k] == 0.0:
            terms.append(0.0)
            continue
        pk = p[dom]
        yk = yc[k][dom]
        term = float(np.sum(-w[k] * (1.0 - pk) * np.log(1.0 - yk))) / n
        grad[k][dom] = w[k] * (1.0 - pk) / ((1.0 - yk) * K * n)
        total += term
        terms.append(term)
    return total / K, grad, terms


def total_loss(y, masks, prior, labels: WeakLabelSet, weights: LossWeights = LossWeights(),
               bands: list[RegionBands] | None = None) -> LossReport:
    """Combine the three terms; bands are built per region from its label
    unless supplied by the caller."""
    y = np.asarray(y)
    masks = np.asarray(masks)
    _check_grids(y, masks, np.asarray(prior))
    problems = validate(labels)
    if problems:
        raise LabelError("; ".join(problems))
    if labels.K != masks.shape[0]:
        raise LabelError(f"labels have {labels.K} regions, masks have {masks.shape[0]}")
    if bands is None:
        bands = [
            make_bands(masks[k], labels.error_labels[k], weights.eta)
            for k in range(masks.shape[0])
        ]
    s, gs, ts = loss_stab(y, masks, bands, weights.eps, weights.stab_background, weights.eta)
    p, gp, tp = loss_plus(y, prior, bands, labels, weights.eps)
    m, gm, tm = loss_minus(y, prior, bands, labels, weights.eps)
    total = weights.lambda_stab * s + weights.lambda_plus * p + weights.lambda_minus * m
    grad = weights.lambda_stab * gs + weights.lambda_plus * gp + weights.lambda_minus * gm
    per_region = [
        {"region": k + 1, "stab": ts[k], "plus": tp[k], "minus": tm[k]}
        for k in range(masks.shape[0])
    ]
    return LossReport(total=total, stab=s, plus=p, minus=m, per_region=per_region, grad=grad)
