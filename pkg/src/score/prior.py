"""Boundary probability map from intensity clipping.

The map is built by clipping intensities between an Otsu-derived lower
bound and a percentile-derived upper bound, then normalizing to [0, 1].
It highlights bright structures (bone on CT) and is used to steer the
refiner's corrections toward plausible anatomy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateImageError
from .volume import Volume3


@dataclass(frozen=True)
class PriorConfig:
    hist_bins: int = 256
    upper_percentile: float = 99.5

    def __post_init__(self):
        if self.hist_bins < 2:
            raise ValueError("hist_bins must be >= 2")
        if not 0 < self.upper_percentile <= 100:
            raise ValueError("upper_percentile must be in (0, 100]")


@dataclass(frozen=True)
class PriorResult:
    prior: Volume3
    t_lo: float
    t_hi: float
    degenerate: bool = False  # set when t_hi <= t_lo and the indicator fallback was used


def otsu_threshold(values, bins: int = 256) -> float:
    """Bin-edge threshold maximizing between-class variance.

    The histogram covers [min, max] of the data with `bins` equal bins;
    candidate thresholds are the interior bin edges and ties resolve to
    the lowest edge.  The argmax is computed in exact integer arithmetic
    (bin indices as class values), which picks the same split as any
    affine rescaling of the values would.
    """
    data = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(data.min()), float(data.max())
    if hi <= lo:
        raise DegenerateImageError("image is constant; Otsu threshold undefined")
    hist, edges = np.histogram(data, bins=bins, range=(lo, hi))
    counts = [int(c) for c in hist]
    n = sum(counts)

    # sigma_b(i) = w0*w1*(mu0-mu1)^2 is proportional to
    # (s0*n1 - s1*n0)^2 / (n0*n1) with s = sum of index*count per class;
    # compare candidates by cross-multiplication so ties are exact.
    best_i = None
    best_num = best_den = 0  # best sigma as num/den, exact
    n0 = s0 = 0
    s_tot = sum(i * c for i, c in enumerate(counts))
    for i in range(bins - 1):
        n0 += counts[i]
        s0 += i * counts[i]
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        a = s0 * n1 - (s_tot - s0) * n0
        num = a * a
        den = n0 * n1
        if best_i is None or num * best_den > best_num * den:
            best_i, best_num, best_den = i, num, den
    if best_i is None:
        raise DegenerateImageError("all samples fall in one histogram bin")
    return float(edges[best_i + 1])


def percentile(values, p: float) -> float:
    """p-th percentile with linear interpolation between order statistics."""
    data = np.asarray(values, dtype=np.float64).ravel()
    if data.size == 0:
        raise ValueError("percentile of empty data")
    return float(np.percentile(data, p))


def build_prior(img: Volume3, cfg: PriorConfig = PriorConfig()) -> PriorResult:
    """Clip intensities to [otsu, upper percentile] and normalize to [0, 1].

    Degenerate case t_hi <= t_lo falls back to the indicator of
    img > t_lo and flags the result.
    """
    t_lo = otsu_threshold(img.data, cfg.hist_bins)
    t_hi = percentile(img.data, cfg.upper_percentile)
    data = img.data.astype(np.float64)
    if t_hi <= t_lo:
        p = (data > t_lo).astype(np.float32)
        return PriorResult(prior=Volume3(p, img.spacing), t_lo=t_lo, t_hi=t_hi, degenerate=True)
    p = np.clip((data - t_lo) / (t_hi - t_lo), 0.0, 1.0).astype(np.float32)
    return PriorResult(prior=Volume3(p, img.spacing), t_lo=t_lo, t_hi=t_hi)
