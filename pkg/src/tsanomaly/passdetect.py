"""Proportion adaptive segment selection (PASS).

Every window up to ``max_seg_len`` gets one p-value per component, the p-values
are combined with higher criticism, and disjoint windows whose statistic
exceeds ``lambda`` are extracted greedily, strongest first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erfc

from .core import InvalidArgumentError, TimeSeriesMatrix
from .transforms import apply_transform

P_FLOOR = 1e-300
Q_CLAMP = 1.0 - 1e-12


@dataclass(frozen=True)
class PassSegment:
    start: int
    end: int
    xstar: float


@dataclass(frozen=True)
class PassResult:
    segments: tuple[PassSegment, ...]
    lambda_used: float
    alpha0: int
    n: int = 0
    p: int = 0
    min_seg_len: int = 1
    max_seg_len: int = 10


def component_pvalue(segment) -> float:
    """Two-sided Gaussian p-value of the standardised sum of ``segment``."""
    seg = np.asarray(segment, dtype=float)
    if seg.size == 0:
        raise InvalidArgumentError("empty segment")
    z = seg.sum() / math.sqrt(seg.size)
    return max(float(erfc(abs(z) / math.sqrt(2.0))), P_FLOOR)


def _hc_terms(sorted_q: np.ndarray) -> np.ndarray:
    # sorted_q: (..., p) ascending. Only the denominator is clamped, so a
    # p-value of exactly i/p still contributes exactly zero.
    p = sorted_q.shape[-1]
    i = np.arange(1, p + 1, dtype=float)
    qc = np.minimum(sorted_q, Q_CLAMP)
    return math.sqrt(p) * (i / p - sorted_q) / np.sqrt(qc * (1.0 - qc))


def higher_criticism(q, alpha0: int = 1, mode: str = "max") -> float:
    """Higher-criticism statistic of the p-values ``q``.

    ``mode="max"`` (default) takes the maximum of the standardised terms over
    ``i = alpha0 .. p``; ``mode="min"`` takes the minimum instead.
    """
    q = np.asarray(q, dtype=float).ravel()
    p = q.size
    _check_alpha0(alpha0, p)
    if np.any((q <= 0) | (q > 1)) or not np.all(np.isfinite(q)):
        raise InvalidArgumentError("p-values must lie in (0, 1]")
    terms = _hc_terms(np.sort(q))[alpha0 - 1 :]
    return float(terms.max() if mode == "max" else terms.min())


def _check_alpha0(alpha0: int, p: int) -> None:
    if int(alpha0) != alpha0 or alpha0 < 1:
        raise InvalidArgumentError("alpha0 must be a positive integer")
    if alpha0 > p:
        raise InvalidArgumentError(f"alpha0={alpha0} exceeds the number of variates p={p}")


def default_lambda(n: int, p: int, max_seg_len: int) -> float:
    """``(1.1 log(n L) + 2 log log p) / sqrt(log log p)``; needs ``p > e``."""
    if p <= math.e:
        raise InvalidArgumentError(
            f"default lambda needs log(log(p)) > 0 (p >= 3); got p={p}, pass lambda explicitly"
        )
    lp = math.log(math.log(p))
    return (1.1 * math.log(n * max_seg_len) + 2.0 * lp) / math.sqrt(lp)


def window_statistics(
    x: np.ndarray, alpha0: int, min_seg_len: int, max_seg_len: int, mode: str = "max"
) -> dict[int, np.ndarray]:
    """HC statistic per window: ``{length: array over starts}``."""
    n, p = x.shape
    prefix = np.vstack([np.zeros(p), np.cumsum(x, axis=0)])
    out = {}
    for length in range(min_seg_len, min(max_seg_len, n) + 1):
        z = (prefix[length:] - prefix[:-length]) / math.sqrt(length)
        q = np.maximum(erfc(np.abs(z) / math.sqrt(2.0)), P_FLOOR)
        terms = _hc_terms(np.sort(q, axis=1))[:, alpha0 - 1 :]
        out[length] = terms.max(axis=1) if mode == "max" else terms.min(axis=1)
    return out


def greedy_extract(stats: dict[int, np.ndarray], n: int, lam: float) -> list[PassSegment]:
    """Take windows above ``lam`` in order (-stat, start, length), skipping overlaps."""
    starts, lengths, values = [], [], []
    for length, v in stats.items():
        idx = np.flatnonzero(v > lam)
        starts.append(idx)
        lengths.append(np.full(idx.size, length))
        values.append(v[idx])
    if not starts:
        return []
    s = np.concatenate(starts)
    ln = np.concatenate(lengths)
    v = np.concatenate(values)
    order = np.lexsort((ln, s, -v))
    taken = np.zeros(n, dtype=bool)
    found = []
    for j in order:
        a, b = int(s[j]), int(s[j] + ln[j])
        if taken[a:b].any():
            continue
        taken[a:b] = True
        found.append(PassSegment(a, b - 1, float(v[j])))
    return found


def pass_detect(
    x,
    alpha0: int = 1,
    lam: Optional[float] = None,
    min_seg_len: int = 1,
    max_seg_len: int = 10,
    transform="robustscale",
    hc_mode: str = "max",
) -> PassResult:
    """Detect anomalous segments. Returned indices are 0-based inclusive."""
    data = TimeSeriesMatrix.from_array(x)
    n, p = data.n, data.p
    if min_seg_len < 1 or max_seg_len < min_seg_len:
        raise InvalidArgumentError("need max_seg_len >= min_seg_len >= 1")
    if hc_mode not in ("max", "min"):
        raise InvalidArgumentError("hc_mode must be 'max' or 'min'")
    _check_alpha0(alpha0, p)
    lam_used = default_lambda(n, p, max_seg_len) if lam is None else float(lam)
    z = apply_transform(np.asarray(data.values), transform)
    stats = window_statistics(z, alpha0, min_seg_len, max_seg_len, hc_mode)
    segments = greedy_extract(stats, n, lam_used)
    return PassResult(tuple(segments), lam_used, int(alpha0), n, p, min_seg_len, max_seg_len)
