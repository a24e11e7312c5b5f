"""Period folding for lightcurves with a suspected periodic transit."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .core import DataError, InvalidArgumentError


def default_bins(n: int) -> int:
    """Square-root rule."""
    return max(1, int(round(math.sqrt(n))))


def period_average(
    times, values, period: float, bins: Optional[int] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Fold ``times`` modulo ``period`` and average ``values`` within equal bins.

    Returns ``(bin_centres, means)``; empty bins are dropped.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise DataError("times and values must be 1-d arrays of equal length")
    if t.size == 0:
        raise DataError("no observations to fold")
    if not (period > 0 and math.isfinite(period)):
        raise InvalidArgumentError("period must be positive")
    bins = default_bins(t.size) if bins is None else int(bins)
    if bins < 1:
        raise InvalidArgumentError("bins must be positive")
    phase = np.mod(t, period)
    idx = np.minimum((phase / period * bins).astype(np.int64), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    sums = np.bincount(idx, weights=v, minlength=bins)
    keep = counts > 0
    centres = (np.arange(bins) + 0.5) * period / bins
    return centres[keep], sums[keep] / counts[keep]
