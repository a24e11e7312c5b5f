"""Robust standardisation and autocorrelation correction.

All transforms act on one column at a time; :func:`apply_transform`
broadcasts them over the columns of a matrix.
"""

from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import stats

from .core import DegenerateScaleError, InvalidArgumentError

MAD_CONSISTENCY = 1.4826
IQR_CONSISTENCY = 1.349
AR1_CLAMP = 0.999


@dataclass(frozen=True)
class RobustScaleParams:
    mu_hat: float
    sigma_hat: float
    rho_hat: float = 0.0


def _as_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidArgumentError("expected a 1-d series")
    return x


def mad(x: np.ndarray) -> float:
    """Median absolute deviation scaled for Gaussian consistency."""
    med = np.median(x)
    return MAD_CONSISTENCY * float(np.median(np.abs(x - med)))


def robustscale(x, variate: Optional[int] = None) -> tuple[np.ndarray, RobustScaleParams]:
    """Centre on the median and divide by the (consistency-scaled) MAD."""
    x = _as_vector(x)
    if x.size < 2:
        raise InvalidArgumentError("robustscale needs at least two observations")
    mu = float(np.median(x))
    sigma = MAD_CONSISTENCY * float(np.median(np.abs(x - mu)))
    if not sigma > 0:
        where = "" if variate is None else f" in variate {variate + 1}"
        raise DegenerateScaleError(f"median absolute deviation is zero{where}", variate)
    return (x - mu) / sigma, RobustScaleParams(mu, sigma, 0.0)


def robust_ar1(x) -> float:
    """Robust lag-1 autocorrelation estimate.

    Spearman correlation of the lag-1 pairs of the median/MAD standardised
    series, mapped to the Gaussian (Pearson) scale with ``2 sin(pi r / 6)``
    and clamped to ``[-0.999, 0.999]``. A degenerate series yields 0 and a
    ``RuntimeWarning``.
    """
    x = _as_vector(x)
    if x.size < 3:
        raise InvalidArgumentError("robust_ar1 needs at least three observations")
    try:
        z, _ = robustscale(x)
    except DegenerateScaleError:
        warnings.warn("degenerate scale in robust_ar1; returning 0", RuntimeWarning)
        return 0.0
    a, b = z[:-1], z[1:]
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        warnings.warn("constant lag pairs in robust_ar1; returning 0", RuntimeWarning)
        return 0.0
    rho_s = stats.spearmanr(a, b).statistic
    if not np.isfinite(rho_s):
        warnings.warn("undefined rank correlation in robust_ar1; returning 0", RuntimeWarning)
        return 0.0
    rho = 2.0 * math.sin(math.pi * float(rho_s) / 6.0)
    return float(min(AR1_CLAMP, max(-AR1_CLAMP, rho)))


def iqr_scale(x, variate: Optional[int] = None) -> tuple[np.ndarray, RobustScaleParams]:
    """Centre on the median and divide by ``IQR / 1.349``."""
    x = _as_vector(x)
    mu = float(np.median(x))
    q1, q3 = np.percentile(x, [25.0, 75.0])
    sigma = float(q3 - q1) / IQR_CONSISTENCY
    if not sigma > 0:
        where = "" if variate is None else f" in variate {variate + 1}"
        raise DegenerateScaleError(f"inter-quartile range is zero{where}", variate)
    return (x - mu) / sigma, RobustScaleParams(mu, sigma, 0.0)


def ac_correction_factor(rho: float) -> float:
    return math.sqrt((1.0 - rho) / (1.0 + rho))


def ac_corrected(
    x, rho: Optional[float] = None, variate: Optional[int] = None
) -> tuple[np.ndarray, RobustScaleParams]:
    """Median/IQR scaling shrunk by ``sqrt((1 - rho) / (1 + rho))``.

    Only appropriate when looking for changes in mean. ``rho`` defaults to
    :func:`robust_ar1` of ``x``.
    """
    x = _as_vector(x)
    if x.size < 3:
        raise InvalidArgumentError("ac_corrected needs at least three observations")
    scaled, params = iqr_scale(x, variate)
    rho_hat = robust_ar1(x) if rho is None else float(rho)
    if not abs(rho_hat) < 1:
        raise InvalidArgumentError(f"invalid autocorrelation estimate {rho_hat}")
    return (
        ac_correction_factor(rho_hat) * scaled,
        RobustScaleParams(params.mu_hat, params.sigma_hat, rho_hat),
    )


def _kth_distance(sorted_vals: list, med: float, mid: int, k: int) -> float:
    """k-th smallest (0-based) of ``|v - med|`` over a sorted list.

    The distances form two ascending runs: leftwards from ``mid - 1`` and
    rightwards from ``mid``. Selection is the classic two-sorted-array
    binary search, O(log n).
    """
    n_left, n_right = mid, len(sorted_vals) - mid

    def left(j):  # j-th smallest on the left
        return med - sorted_vals[mid - 1 - j]

    def right(j):
        return sorted_vals[mid + j] - med

    # take i from the left run and k + 1 - i from the right run
    lo, hi = max(0, k + 1 - n_right), min(k + 1, n_left)
    while lo <= hi:
        i = (lo + hi) // 2
        j = k + 1 - i
        l_max = left(i - 1) if i > 0 else -math.inf
        r_max = right(j - 1) if j > 0 else -math.inf
        l_next = left(i) if i < n_left else math.inf
        r_next = right(j) if j < n_right else math.inf
        if l_max > r_next:
            hi = i - 1
        elif r_max > l_next:
            lo = i + 1
        else:
            return max(l_max, r_max)
    raise RuntimeError("selection failed")  # unreachable for valid input


def _prefix_median_mad(sorted_vals: list) -> tuple[float, float]:
    m = len(sorted_vals)
    half = m // 2
    if m % 2:
        med = sorted_vals[half]
    else:
        med = 0.5 * (sorted_vals[half - 1] + sorted_vals[half])
    mid = bisect.bisect_left(sorted_vals, med)
    if m % 2:
        raw = _kth_distance(sorted_vals, med, mid, half)
    else:
        raw = 0.5 * (
            _kth_distance(sorted_vals, med, mid, half - 1)
            + _kth_distance(sorted_vals, med, mid, half)
        )
    return med, MAD_CONSISTENCY * raw


def sequential_robustscale(x, burn_in: int = 10) -> np.ndarray:
    """Online median/MAD scaling using only the data seen so far.

    The output at time ``t >= burn_in`` uses the median and MAD of
    ``x[:t+1]``; the first ``burn_in`` outputs reuse the estimates at the end
    of the burn-in. A zero MAD carries the last valid scale forward (1 until
    one exists).
    """
    x = _as_vector(x)
    if burn_in < 2:
        raise InvalidArgumentError("burn_in must be at least 2")
    n = x.size
    burn_in = min(burn_in, n)
    out = np.empty(n)
    window: list = []
    scale = 1.0
    for t in range(n):
        bisect.insort(window, float(x[t]))
        if t + 1 < burn_in:
            continue
        med, sigma = _prefix_median_mad(window)
        if sigma > 0:
            scale = sigma
        if t + 1 == burn_in:
            out[:burn_in] = (x[:burn_in] - med) / scale
        else:
            out[t] = (x[t] - med) / scale
    return out


TransformLike = Union[str, Callable[[np.ndarray], np.ndarray], None]


def apply_transform(values: np.ndarray, transform: TransformLike, rho=None) -> np.ndarray:
    """Apply a named or callable transform to every column of ``values``.

    ``rho`` (scalar or one value per column) overrides the autocorrelation
    estimate used by ``ac_corrected``.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if transform is None or transform == "none":
        return values.copy()
    p = values.shape[1]
    out = np.empty_like(values)
    rhos = [None] * p if rho is None else list(np.broadcast_to(np.asarray(rho, float), (p,)))
    for j in range(p):
        col = values[:, j]
        if callable(transform):
            res = np.asarray(transform(col), dtype=float)
        elif transform == "robustscale":
            res = robustscale(col, variate=j)[0]
        elif transform == "ac_corrected":
            res = ac_corrected(col, rho=rhos[j], variate=j)[0]
        elif transform == "sequential":
            res = sequential_robustscale(col)
        else:
            raise InvalidArgumentError(f"unknown transform {transform!r}")
        if res.shape != col.shape or not np.all(np.isfinite(res)):
            raise InvalidArgumentError("transform must return a finite vector of equal length")
        out[:, j] = res
    return out
