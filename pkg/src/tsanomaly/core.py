"""Shared domain types, result containers and penalty construction.

Everything in here is immutable after construction. Time indices stored on
result objects are 0-based; conversion to the 1-based convention used in
printed and serialized output happens in :mod:`tsanomaly.io`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

COST_TYPES = ("mean", "meanvar")
TRANSFORMS = ("robustscale", "ac_corrected", "sequential", "none")


class InvalidArgumentError(ValueError):
    """Raised when an argument violates a documented precondition."""


class DegenerateScaleError(ValueError):
    """Raised when a robust scale estimate is zero."""

    def __init__(self, message: str, variate: Optional[int] = None):
        super().__init__(message)
        self.variate = variate


class DataError(ValueError):
    """Raised for malformed input data (non-finite values, ragged rows...)."""


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeriesMatrix:
    """An ``n x p`` block of observations, rows in time order."""

    values: np.ndarray
    variate_names: Optional[tuple[str, ...]] = None
    timestamps: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DataError(f"expected a 1-d or 2-d array, got {values.ndim} dimensions")
        n, p = values.shape
        if n < 1 or p < 1:
            raise DataError(f"empty data: shape {values.shape}")
        bad = ~np.isfinite(values)
        if bad.any():
            row, col = np.argwhere(bad)[0]
            raise DataError(f"non-finite value at row {row + 1}, column {col + 1}")
        object.__setattr__(self, "values", _frozen_array(values))
        if self.variate_names is not None:
            names = tuple(str(v) for v in self.variate_names)
            if len(names) != p:
                raise DataError(f"{len(names)} variate names given for {p} columns")
            object.__setattr__(self, "variate_names", names)
        if self.timestamps is not None:
            ts = _frozen_array(self.timestamps)
            if ts.shape != (n,):
                raise DataError("timestamps must have one entry per row")
            object.__setattr__(self, "timestamps", ts)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_array(cls, x, variate_names=None) -> "TimeSeriesMatrix":
        if isinstance(x, TimeSeriesMatrix):
            return x
        return cls(np.asarray(x, dtype=float), variate_names=variate_names)


@dataclass(frozen=True)
class ComponentRecord:
    """Per-variate part of a collective anomaly.

    ``mean_change`` is the squared segment mean on the transformed scale and
    ``test_statistic`` the component's saving; both are computed over the
    component's effective window ``start + start_lag .. end - end_lag``.
    """

    variate: int
    start_lag: int
    end_lag: int
    mean_change: float
    test_statistic: float
    variance_change: Optional[float] = None
    raw_mean: Optional[float] = None


@dataclass(frozen=True)
class CollectiveAnomaly:
    start: int
    end: int
    components: tuple[ComponentRecord, ...]

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    @property
    def variates(self) -> tuple[int, ...]:
        return tuple(c.variate for c in self.components)


@dataclass(frozen=True)
class PointAnomaly:
    location: int
    variate: int
    strength: float


@dataclass(frozen=True)
class PenaltySchedule:
    """Collective penalty per length, point penalty and marginal penalties.

    ``beta`` has one entry (applied to every length) or one entry per
    admissible length starting at ``min_seg_len``. ``marginal_beta`` is only
    used by the multivariate detectors.
    """

    beta: np.ndarray
    beta_tilde: float
    marginal_beta: Optional[np.ndarray] = None

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if beta.ndim != 1 or beta.size == 0:
            raise InvalidArgumentError("beta must be a non-empty vector")
        if not np.all(np.isfinite(beta)) or np.any(beta <= 0):
            raise InvalidArgumentError("collective penalties must be positive and finite")
        if not (math.isfinite(self.beta_tilde) and self.beta_tilde > 0):
            raise InvalidArgumentError("beta_tilde must be positive and finite")
        object.__setattr__(self, "beta", _frozen_array(beta))
        object.__setattr__(self, "beta_tilde", float(self.beta_tilde))
        if self.marginal_beta is not None:
            mb = np.atleast_1d(np.asarray(self.marginal_beta, dtype=float))
            # 2*log(p + 1 - i) is exactly zero for the last component
            if not np.all(np.isfinite(mb)) or np.any(mb < 0):
                raise InvalidArgumentError("marginal penalties must be non-negative and finite")
            object.__setattr__(self, "marginal_beta", _frozen_array(mb))

    def _key(self):
        mb = None if self.marginal_beta is None else self.marginal_beta.tobytes()
        return (self.beta.tobytes(), self.beta_tilde, mb)

    def __eq__(self, other):
        if not isinstance(other, PenaltySchedule):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def beta_for_lengths(self, min_seg_len: int, max_seg_len: int) -> np.ndarray:
        """Penalty vector indexed by ``length - min_seg_len``."""
        count = max_seg_len - min_seg_len + 1
        if self.beta.size == 1:
            return np.full(count, self.beta[0])
        if self.beta.size != count:
            raise InvalidArgumentError(
                f"beta has {self.beta.size} entries; expected 1 or "
                f"max_seg_len - min_seg_len + 1 = {count}"
            )
        return np.array(self.beta)

    def scaled(self, factor: float) -> "PenaltySchedule":
        mb = None if self.marginal_beta is None else self.marginal_beta * factor
        return PenaltySchedule(self.beta * factor, self.beta_tilde * factor, mb)


@dataclass(frozen=True)
class DetectorConfig:
    """Settings shared by the CAPA family.

    ``max_seg_len=None`` means unbounded (the series length). ``penalties``
    of ``None`` selects the defaults for the data dimensions.
    ``meanvar_point_log_penalty`` controls whether ``exp(-beta_tilde)``
    regularises the logarithm in the mean/variance point saving.
    """

    cost_type: str = "meanvar"
    min_seg_len: int = 10
    max_seg_len: Optional[int] = None
    max_lag: int = 0
    transform: str = "robustscale"
    penalties: Optional[PenaltySchedule] = None
    prune: bool = True
    allow_meanvar_lag: bool = False
    meanvar_point_log_penalty: bool = True

    def __post_init__(self):
        if self.cost_type not in COST_TYPES:
            raise InvalidArgumentError(f"cost_type must be one of {COST_TYPES}")
        if int(self.min_seg_len) != self.min_seg_len or self.min_seg_len < 2:
            raise InvalidArgumentError("min_seg_len must be an integer >= 2")
        if self.max_seg_len is not None and self.max_seg_len < self.min_seg_len:
            raise InvalidArgumentError("max_seg_len must be at least min_seg_len")
        if int(self.max_lag) != self.max_lag or self.max_lag < 0:
            raise InvalidArgumentError("max_lag must be a non-negative integer")
        if self.cost_type == "meanvar" and self.max_lag > 0 and not self.allow_meanvar_lag:
            raise InvalidArgumentError(
                "lags with cost_type='meanvar' require allow_meanvar_lag=True"
            )
        if self.transform not in TRANSFORMS and not callable(self.transform):
            raise InvalidArgumentError(f"unknown transform {self.transform!r}")

    def resolved_max_seg_len(self, n: int) -> int:
        return n if self.max_seg_len is None else min(int(self.max_seg_len), n)

    def with_(self, **changes) -> "DetectorConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class AnomalySet:
    collective: tuple[CollectiveAnomaly, ...]
    points: tuple[PointAnomaly, ...]
    n: int
    p: int
    config_echo: Optional[DetectorConfig] = None
    penalties: Optional[PenaltySchedule] = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "collective", tuple(sorted(self.collective, key=lambda c: c.start))
        )
        object.__setattr__(
            self, "points", tuple(sorted(self.points, key=lambda a: (a.location, a.variate)))
        )

    def same_anomalies(self, other: "AnomalySet") -> bool:
        return self.collective == other.collective and self.points == other.points


# -- penalties ---------------------------------------------------------------


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not abs(rho) < 1:
        raise InvalidArgumentError(f"autocorrelation estimate must lie in (-1, 1), got {rho}")
    return rho


def default_penalties_uv(n: int, cost_type: str = "meanvar") -> PenaltySchedule:
    """BIC-style defaults: ``3 log n`` (mean) or ``4 log n`` (meanvar)."""
    if n < 2:
        raise InvalidArgumentError("need at least two observations")
    if cost_type not in COST_TYPES:
        raise InvalidArgumentError(f"cost_type must be one of {COST_TYPES}")
    value = (3.0 if cost_type == "mean" else 4.0) * math.log(n)
    return PenaltySchedule(np.array([value]), value)


def inflated_penalties_uv(n: float, rho_hat: float) -> PenaltySchedule:
    """Mean-change penalty inflated for AR(1) dependence.

    ``beta = beta_tilde = 3 (1 + rho) / (1 - rho) log n``.
    """
    rho = _check_rho(rho_hat)
    if n < 2:
        raise InvalidArgumentError("need at least two observations")
    value = 3.0 * ((1.0 + rho) / (1.0 - rho)) * math.log(n)
    return PenaltySchedule(np.array([value]), value)


def default_penalties_mv(n: int, p: int, w: int = 0, cost_type: str = "mean") -> PenaltySchedule:
    """Defaults for the multivariate detectors.

    The point penalty is ``3 log(np)``. Marginal penalties follow the
    construction ``beta_1 = 3 log n + 2 log p`` and
    ``beta_i = 2 log(p + 1 - i)`` for ``i >= 2``. ``w`` and ``cost_type`` are
    validated but do not change the values.
    """
    if n < 2 or p < 1:
        raise InvalidArgumentError("need n >= 2 and p >= 1")
    if w < 0:
        raise InvalidArgumentError("max lag must be non-negative")
    if cost_type not in COST_TYPES:
        raise InvalidArgumentError(f"cost_type must be one of {COST_TYPES}")
    marginal = 2.0 * np.log(np.arange(p, 0, -1, dtype=float))
    marginal[0] += 3.0 * math.log(n)
    beta_tilde = 3.0 * math.log(n * p)
    # the collective term is carried by the marginal penalties; beta is kept
    # for the schedule's contract and equals beta_1
    return PenaltySchedule(np.array([marginal[0]]), beta_tilde, marginal)


def inflated_penalties_mv(
    n: int, p: int, w: int, rho_hats: Sequence[float]
) -> PenaltySchedule:
    """Multivariate penalties inflated by the ordered AR(1) estimates."""
    rhos = np.array([_check_rho(r) for r in np.atleast_1d(rho_hats)], dtype=float)
    if rhos.size != p:
        raise InvalidArgumentError(f"expected {p} autocorrelation estimates, got {rhos.size}")
    if n < 2 or w < 0:
        raise InvalidArgumentError("need n >= 2 and w >= 0")
    rhos = np.sort(rhos)[::-1]
    factor = (1.0 + rhos) / (1.0 - rhos)
    marginal = 2.0 * factor * math.log(p * (w + 1))
    marginal[0] = 2.0 * factor[0] * math.log(n * p * (w + 1))
    beta_tilde = 2.0 * factor[0] * math.log(n * p)
    return PenaltySchedule(np.array([marginal[0]]), beta_tilde, marginal)
