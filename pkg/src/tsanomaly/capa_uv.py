"""Univariate collective and point anomaly detection.

The detector maximises the penalised saving

    sum_k [S(s_k, e_k) - beta(len_k)] + sum_{t in O} [S'(x_t) - beta']

over non-overlapping collective anomalies and point anomalies with an
optimal-partitioning recursion. Candidate segment starts are pruned with a
PELT-style inequality that never changes the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    AnomalySet,
    CollectiveAnomaly,
    ComponentRecord,
    DetectorConfig,
    InvalidArgumentError,
    PenaltySchedule,
    PointAnomaly,
    TimeSeriesMatrix,
    default_penalties_uv,
)
from .transforms import apply_transform

VARIANCE_FLOOR = 1e-8

TYPICAL, POINT, COLLECTIVE = 0, 1, 2


def saving_mean(segment) -> float:
    """``L * mean(segment)**2`` for a segment of transformed data."""
    seg = np.asarray(segment, dtype=float)
    return float(seg.size * seg.mean() ** 2)


def saving_meanvar(segment, floor: float = VARIANCE_FLOOR) -> float:
    """Saving for a joint change in mean and variance.

    ``sum x**2 - L (1 + log(var_mle))`` with the MLE variance floored.
    """
    seg = np.asarray(segment, dtype=float)
    if seg.size < 2:
        raise InvalidArgumentError("mean/variance saving needs at least two observations")
    var = max(float(np.mean((seg - seg.mean()) ** 2)), floor)
    return float(np.sum(seg**2) - seg.size * (1.0 + math.log(var)))


def point_saving(x, beta_tilde: float, cost_type: str, log_penalty: bool = True):
    """Improvement in fit from treating single observations as outliers.

    Mean: ``x**2``. Mean/variance: ``x**2 - 1 - log(exp(-beta_tilde) + x**2)``.
    Works elementwise on arrays.
    """
    x = np.asarray(x, dtype=float)
    sq = x * x
    if cost_type == "mean":
        return sq
    reg = math.exp(-beta_tilde) if log_penalty else VARIANCE_FLOOR
    return sq - 1.0 - np.log(reg + sq)


_COMPACT_EVERY = 8


class SavingCost:
    """O(1) segment savings from prefix sums.

    Segments are addressed by prefix indices: ``(tau, t)`` is the half-open
    range ``x[tau:t]``.
    """

    def __init__(self, x, cost_type: str = "meanvar", floor: float = VARIANCE_FLOOR):
        x = np.asarray(x, dtype=float)
        self.cost_type = cost_type
        self.floor = floor
        self.prefix_sums = np.concatenate(([0.0], np.cumsum(x)))
        self.prefix_sq_sums = np.concatenate(([0.0], np.cumsum(x * x)))

    def savings(self, taus, t: int) -> np.ndarray:
        # integer lengths promote to float in the divisions below
        length = t - np.asarray(taus)
        s1 = self.prefix_sums[t] - self.prefix_sums[taus]
        if self.cost_type == "mean":
            return s1 * s1 / length
        s2 = self.prefix_sq_sums[t] - self.prefix_sq_sums[taus]
        var = np.maximum((s2 - s1 * s1 / length) / length, self.floor)
        return s2 - length * (1.0 + np.log(var))

    def saving(self, tau: int, t: int) -> float:
        return float(self.savings(np.array([tau]), t)[0])

    def segment_stats(self, tau: int, t: int) -> tuple[float, float, bool]:
        """Mean, MLE variance and whether the variance floor was hit."""
        length = t - tau
        s1 = self.prefix_sums[t] - self.prefix_sums[tau]
        s2 = self.prefix_sq_sums[t] - self.prefix_sq_sums[tau]
        mean = s1 / length
        var = (s2 - s1 * s1 / length) / length
        return float(mean), float(max(var, 0.0)), bool(var < self.floor)


@dataclass
class DpState:
    """Forward recursion output.

    ``best[t]`` is the optimal penalised saving of ``x[:t]``; ``choice[t]``
    and ``seg_start[t]`` describe the last step of that optimum.
    """

    best: np.ndarray
    choice: np.ndarray
    seg_start: np.ndarray
    candidates_evaluated: int = 0

    def backtrack(self, epoch: Optional[int] = None) -> tuple[list, list]:
        """Collective ``(tau, t)`` pairs and point indices optimal for ``x[:epoch]``."""
        t = len(self.best) - 1 if epoch is None else int(epoch)
        segments, points = [], []
        while t > 0:
            c = self.choice[t]
            if c == COLLECTIVE:
                tau = int(self.seg_start[t])
                segments.append((tau, t))
                t = tau
            else:
                if c == POINT:
                    points.append(t - 1)
                t -= 1
        return segments[::-1], points[::-1]


def optimal_partition(
    cost: SavingCost,
    point_gain: np.ndarray,
    beta: np.ndarray,
    min_seg_len: int,
    max_seg_len: int,
    prune: bool = True,
) -> DpState:
    """Run the recursion

    B(t) = max{B(t-1), B(t-1) + S'(x_t) - beta', max_l B(t-l) + S(t-l+1, t) - beta(l)}.

    Ties prefer typical over point over collective, and the latest start
    among collective candidates.
    """
    n = point_gain.size
    best = np.zeros(n + 1)
    choice = np.zeros(n + 1, dtype=np.int8)
    seg_start = np.full(n + 1, -1, dtype=np.int64)
    margin = float(beta.max() - beta.min())
    flat_beta = float(beta[0]) if beta.size == 1 else None
    # live candidates occupy cand[lo:m] in increasing order; kill[i] is the epoch
    # from which cand[i] is dominated. Dominated entries are dropped in batches:
    # until then they stay strictly below the optimum and never win.
    cand = np.empty(n + 1, dtype=np.int64)
    kill = np.empty(n + 1, dtype=np.int64)
    lo = m = 0
    next_kill = never = np.iinfo(np.int64).max
    evaluated = 0
    for t in range(1, n + 1):
        tau_new = t - min_seg_len
        if tau_new >= 0:
            cand[m], kill[m] = tau_new, never
            m += 1
        while lo < m and t - cand[lo] > max_seg_len:
            lo += 1
        if next_kill <= t and t % _COMPACT_EVERY == 0:
            keep = kill[lo:m] > t
            live, k = cand[lo:m][keep], kill[lo:m][keep]
            lo, m = 0, live.size
            cand[:m], kill[:m] = live, k
            next_kill = int(k.min()) if m else never
        prev = best[t - 1]
        value, ch, st = prev, TYPICAL, -1
        with_point = prev + point_gain[t - 1]
        if with_point > value:
            value, ch = with_point, POINT
        if m > lo:
            live = cand[lo:m]
            evaluated += live.size
            base = best[live] + cost.savings(live, t)
            vals = base - (flat_beta if flat_beta is not None else beta[t - live - min_seg_len])
            j = live.size - 1 - int(vals[::-1].argmax())
            if vals[j] > value:
                value, ch, st = vals[j], COLLECTIVE, int(live[j])
        best[t], choice[t], seg_start[t] = value, ch, st
        if prune and m > lo:
            floor = value - margin - 1e-8 * (1.0 + abs(value))
            if base.min() < floor:
                k = kill[lo:m]
                np.minimum(k, np.where(base < floor, t + min_seg_len, never), out=k)
                next_kill = min(next_kill, t + min_seg_len)
    return DpState(best, choice, seg_start, evaluated)


def penalised_saving(
    x_transformed, segments, points, cost_type, beta: np.ndarray, beta_tilde: float,
    min_seg_len: int, log_penalty: bool = True,
) -> float:
    """Objective value of a configuration (``segments`` as ``(tau, t)`` pairs)."""
    x = np.asarray(x_transformed, dtype=float)
    total = 0.0
    for tau, t in segments:
        seg = x[tau:t]
        s = saving_mean(seg) if cost_type == "mean" else saving_meanvar(seg)
        total += s - beta[t - tau - min_seg_len]
    for loc in points:
        total += float(point_saving(x[loc], beta_tilde, cost_type, log_penalty)) - beta_tilde
    return total


def _resolve(x, config: Optional[DetectorConfig], overrides: dict) -> DetectorConfig:
    if config is None:
        config = DetectorConfig(**overrides)
    elif overrides:
        config = config.with_(**overrides)
    return config


def _univariate_series(x) -> np.ndarray:
    data = TimeSeriesMatrix.from_array(x)
    if data.p != 1:
        raise InvalidArgumentError(f"univariate detector got {data.p} variates")
    return np.array(data.values[:, 0])


class _UnivariateRun:
    """Shared setup for the offline and sequential univariate detectors."""

    def __init__(self, x, config: DetectorConfig, rho=None):
        self.raw = _univariate_series(x)
        self.n = n = self.raw.size
        self.config = config
        if n < config.min_seg_len:
            raise InvalidArgumentError(
                f"series of length {n} is shorter than min_seg_len={config.min_seg_len}"
            )
        self.x = apply_transform(self.raw, config.transform, rho=rho)[:, 0]
        self.penalties = config.penalties or default_penalties_uv(n, config.cost_type)
        self.max_len = config.resolved_max_seg_len(n)
        self.beta = self.penalties.beta_for_lengths(config.min_seg_len, self.max_len)
        self.cost = SavingCost(self.x, config.cost_type)
        bt = self.penalties.beta_tilde
        self.strength = point_saving(
            self.x, bt, config.cost_type, config.meanvar_point_log_penalty
        )
        self.state = optimal_partition(
            self.cost, self.strength - bt, self.beta, config.min_seg_len,
            self.max_len, prune=config.prune,
        )

    def anomalies(self, epoch: Optional[int] = None) -> AnomalySet:
        segments, points = self.state.backtrack(epoch)
        collective, floored = [], []
        for tau, t in segments:
            mean, var, hit_floor = self.cost.segment_stats(tau, t)
            saving = self.cost.saving(tau, t)
            record = ComponentRecord(
                variate=0,
                start_lag=0,
                end_lag=0,
                mean_change=mean * mean,
                test_statistic=saving,
                variance_change=var if self.config.cost_type == "meanvar" else None,
                raw_mean=float(self.raw[tau:t].mean()),
            )
            collective.append(CollectiveAnomaly(tau, t - 1, (record,)))
            if hit_floor:
                floored.append(tau)
        pts = [PointAnomaly(loc, 0, float(self.strength[loc])) for loc in points]
        diag = {"variance_floor_hit": floored, "candidates_evaluated": self.state.candidates_evaluated}
        if epoch is not None:
            diag["epoch"] = int(epoch)
        return AnomalySet(tuple(collective), tuple(pts), self.n, 1, self.config, self.penalties, diag)


def capa_uv(x, config: Optional[DetectorConfig] = None, *, rho=None, **overrides) -> AnomalySet:
    """Detect collective and point anomalies in a univariate series.

    ``config`` fields may also be passed as keyword arguments, e.g.
    ``capa_uv(x, cost_type="mean", max_seg_len=500)``. ``rho`` fixes the
    autocorrelation used by the ``ac_corrected`` transform.
    """
    config = _resolve(x, config, overrides)
    if config.max_lag:
        raise InvalidArgumentError("max_lag is only meaningful for multivariate data")
    return _UnivariateRun(x, config, rho).anomalies()


class SequentialResult:
    """Offline-as-if-online output: the detector's answer at every epoch."""

    def __init__(self, run):
        self._run = run
        self.n = run.n
        self.config = run.config
        self.penalties = run.penalties
        self.transformed = run.x

    @property
    def best(self) -> np.ndarray:
        return self._run.state.best

    def at_epoch(self, epoch: int) -> AnomalySet:
        """Anomalies the online detector would report after ``epoch`` observations."""
        if not 1 <= epoch <= self.n:
            raise InvalidArgumentError(f"epoch must lie in [1, {self.n}]")
        result = self._run.anomalies(epoch)
        return result

    def final(self) -> AnomalySet:
        return self.at_epoch(self.n)


def scapa_uv(x, config: Optional[DetectorConfig] = None, *, rho=None, **overrides) -> SequentialResult:
    """Sequential CAPA; the transform defaults to ``sequential``."""
    if config is None:
        overrides.setdefault("transform", "sequential")
    config = _resolve(x, config, overrides)
    if config.max_lag:
        raise InvalidArgumentError("max_lag is only meaningful for multivariate data")
    return SequentialResult(_UnivariateRun(x, config, rho))
