"""Subset-multivariate CAPA with lags between components.

A collective anomaly is an outer window ``(s, e)``; each affected component
``i`` may enter late by ``d_i`` and leave early by ``f_i`` (both at most
``max_lag``). The window's saving pools the per-component lag-optimised
savings through their order statistics:

    S(s, e) = max_k sum_{i <= k} (S_(i)(s, e) - beta_i).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .capa_uv import (
    COLLECTIVE,
    POINT,
    TYPICAL,
    DpState,
    SavingCost,
    SequentialResult,
    point_saving,
)
from .core import (
    AnomalySet,
    CollectiveAnomaly,
    ComponentRecord,
    DetectorConfig,
    InvalidArgumentError,
    PointAnomaly,
    TimeSeriesMatrix,
    default_penalties_mv,
)
from .transforms import apply_transform


@dataclass(frozen=True)
class ComponentSaving:
    variate: int
    start_lag: int
    end_lag: int
    saving: float


@dataclass(frozen=True)
class PooledSaving:
    total: float
    k_star: int
    per_component: tuple[ComponentSaving, ...]


def component_lagged_saving(
    cost: SavingCost, s: int, e: int, w: int, min_seg_len: int
) -> tuple[float, int, int]:
    """Best saving over inner windows ``(s + d, e - f)`` with ``d, f <= w``.

    ``s`` and ``e`` are 0-based inclusive. Only lag pairs leaving at least
    ``min_seg_len`` observations are admissible. Ties go to the smallest
    ``d``, then the smallest ``f``.
    """
    if w < 0:
        raise InvalidArgumentError("max lag must be non-negative")
    if e - s + 1 < min_seg_len:
        raise InvalidArgumentError(
            f"window ({s}, {e}) is shorter than the minimum segment length {min_seg_len}"
        )
    best, best_d, best_f = -np.inf, 0, 0
    for d in range(w + 1):
        for f in range(w + 1):
            a, b = s + d, e - f + 1
            if b - a < min_seg_len:
                continue
            val = cost.saving(a, b)
            if val > best:
                best, best_d, best_f = val, d, f
    return float(best), best_d, best_f


def pool(savings, marginal_beta) -> tuple[float, int, np.ndarray]:
    """Order-statistic pooling. Returns ``(total, k_star, order)``.

    ``order`` lists component indices by decreasing saving (stable in the
    component index).
    """
    savings = np.asarray(savings, dtype=float)
    beta = np.asarray(marginal_beta, dtype=float)
    order = np.lexsort((np.arange(savings.size), -savings))
    gains = np.cumsum(savings[order] - beta[: savings.size])
    k = int(np.argmax(gains))
    return float(gains[k]), k + 1, order


def pooled_saving(
    costs: list, s: int, e: int, w: int, min_seg_len: int, marginal_beta
) -> PooledSaving:
    """Pooled penalised saving of outer window ``(s, e)`` (0-based inclusive)."""
    per = [component_lagged_saving(c, s, e, w, min_seg_len) for c in costs]
    total, k, order = pool([v[0] for v in per], marginal_beta)
    chosen = sorted(order[:k].tolist())
    comps = tuple(ComponentSaving(i, per[i][1], per[i][2], per[i][0]) for i in chosen)
    return PooledSaving(total, k, comps)


def _window_savings(prefix, prefix_sq, taus, t, w, min_seg_len, cost_type, floor):
    """Lag-optimised savings, shape ``(len(taus), p)``, for windows ``x[tau:t]``."""
    L, p = taus.size, prefix.shape[1]
    if w == 0:
        length = (t - taus).astype(float)[:, None]
        s1 = prefix[t] - prefix[taus]
        if cost_type == "mean":
            return s1 * s1 / length
        s2 = prefix_sq[t] - prefix_sq[taus]
        var = np.maximum((s2 - s1 * s1 / length) / length, floor)
        return s2 - length * (1.0 + np.log(var))
    # inner starts a in [taus[0], taus[-1] + w]; inner ends b = t - f
    a = np.minimum(np.arange(taus[0], taus[-1] + w + 1), t)
    out = np.full((L, p), -np.inf)
    for f in range(w + 1):
        b = t - f
        length = (b - a).astype(float)
        ok = length >= min_seg_len
        if not ok.any():
            continue
        lengths = np.where(ok, length, 1.0)[:, None]
        s1 = prefix[b] - prefix[a]
        if cost_type == "mean":
            sav = s1 * s1 / lengths
        else:
            s2 = prefix_sq[b] - prefix_sq[a]
            var = np.maximum((s2 - s1 * s1 / lengths) / lengths, floor)
            sav = s2 - lengths * (1.0 + np.log(var))
        sav[~ok] = -np.inf
        # sliding max over d in [0, w]: rows tau .. tau + w of `sav`
        win = sliding_window_view(sav, w + 1, axis=0)[:L]
        np.maximum(out, win.max(axis=2), out=out)
    out[~np.isfinite(out)] = 0.0
    return out


class _MultivariateRun:
    def __init__(self, x, config: DetectorConfig, rho=None):
        data = TimeSeriesMatrix.from_array(x)
        self.raw = np.array(data.values)
        self.n, self.p = n, p = self.raw.shape
        self.config = config
        if n < config.min_seg_len:
            raise InvalidArgumentError(
                f"series of length {n} is shorter than min_seg_len={config.min_seg_len}"
            )
        self.x = apply_transform(self.raw, config.transform, rho=rho)
        self.penalties = config.penalties or default_penalties_mv(
            n, p, config.max_lag, config.cost_type
        )
        mb = self.penalties.marginal_beta
        if mb is None:
            raise InvalidArgumentError("multivariate detection needs marginal penalties")
        if mb.size != p:
            raise InvalidArgumentError(f"marginal_beta has {mb.size} entries for {p} variates")
        self.marginal_beta = np.array(mb)
        self.max_len = config.resolved_max_seg_len(n)
        self.costs = [SavingCost(self.x[:, i], config.cost_type) for i in range(p)]
        bt = self.penalties.beta_tilde
        self.strength = point_saving(self.x, bt, config.cost_type, config.meanvar_point_log_penalty)
        self.state = self._forward()

    def _forward(self) -> DpState:
        cfg = self.config
        n, w, lo_len, hi_len = self.n, cfg.max_lag, cfg.min_seg_len, self.max_len
        prefix = np.vstack([np.zeros(self.p), np.cumsum(self.x, axis=0)])
        prefix_sq = np.vstack([np.zeros(self.p), np.cumsum(self.x * self.x, axis=0)])
        floor = self.costs[0].floor
        beta_cum = np.cumsum(self.marginal_beta)
        point_gain = np.maximum(self.strength - self.penalties.beta_tilde, 0.0).sum(axis=1)
        best = np.zeros(n + 1)
        choice = np.zeros(n + 1, dtype=np.int8)
        seg_start = np.full(n + 1, -1, dtype=np.int64)
        evaluated = 0
        for t in range(1, n + 1):
            prev = best[t - 1]
            value, ch, st = prev, TYPICAL, -1
            with_point = prev + point_gain[t - 1]
            if with_point > value:
                value, ch = with_point, POINT
            hi = t - lo_len
            if hi >= 0:
                taus = np.arange(max(0, t - hi_len), hi + 1)
                evaluated += taus.size
                sav = _window_savings(prefix, prefix_sq, taus, t, w, lo_len, cfg.cost_type, floor)
                sav = -np.sort(-sav, axis=1)
                pooled = (np.cumsum(sav, axis=1) - beta_cum).max(axis=1)
                vals = best[taus] + pooled
                j = taus.size - 1 - int(np.argmax(vals[::-1]))
                if vals[j] > value:
                    value, ch, st = vals[j], COLLECTIVE, int(taus[j])
            best[t], choice[t], seg_start[t] = value, ch, st
        return DpState(best, choice, seg_start, evaluated)

    def anomalies(self, epoch: Optional[int] = None) -> AnomalySet:
        cfg = self.config
        segments, point_steps = self.state.backtrack(epoch)
        collective = []
        for tau, t in segments:
            pooled = pooled_saving(
                self.costs, tau, t - 1, cfg.max_lag, cfg.min_seg_len, self.marginal_beta
            )
            records = []
            for comp in pooled.per_component:
                a, b = tau + comp.start_lag, t - comp.end_lag
                mean, var, _ = self.costs[comp.variate].segment_stats(a, b)
                records.append(
                    ComponentRecord(
                        variate=comp.variate,
                        start_lag=comp.start_lag,
                        end_lag=comp.end_lag,
                        mean_change=mean * mean,
                        test_statistic=self.costs[comp.variate].saving(a, b),
                        variance_change=var if cfg.cost_type == "meanvar" else None,
                        raw_mean=float(self.raw[a:b, comp.variate].mean()),
                    )
                )
            collective.append(CollectiveAnomaly(tau, t - 1, tuple(records)))
        bt = self.penalties.beta_tilde
        points = [
            PointAnomaly(loc, i, float(self.strength[loc, i]))
            for loc in point_steps
            for i in range(self.p)
            if self.strength[loc, i] - bt > 0
        ]
        diag = {"candidates_evaluated": self.state.candidates_evaluated}
        if epoch is not None:
            diag["epoch"] = int(epoch)
        return AnomalySet(
            tuple(collective), tuple(points), self.n, self.p, cfg, self.penalties, diag
        )


def _resolve(config, overrides, sequential):
    if config is None:
        overrides.setdefault("cost_type", "mean")
        if sequential:
            overrides.setdefault("transform", "sequential")
        return DetectorConfig(**overrides)
    return config.with_(**overrides) if overrides else config


def capa_mv(x, config: Optional[DetectorConfig] = None, *, rho=None, **overrides) -> AnomalySet:
    """Multivariate CAPA. Keyword arguments override ``DetectorConfig`` fields.

    When no config is given the cost type defaults to ``"mean"``.
    """
    config = _resolve(config, overrides, sequential=False)
    return _MultivariateRun(x, config, rho).anomalies()


def scapa_mv(x, config: Optional[DetectorConfig] = None, *, rho=None, **overrides) -> SequentialResult:
    """Sequential multivariate CAPA with epoch replay."""
    config = _resolve(config, overrides, sequential=True)
    return SequentialResult(_MultivariateRun(x, config, rho))
