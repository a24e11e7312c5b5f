"""Synthetic multivariate series with planted mean-shift anomalies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import InvalidArgumentError, TimeSeriesMatrix


@dataclass(frozen=True)
class SimSpec:
    """Parameters of :func:`simulate`. ``starts`` are 1-based row indices."""

    n: int
    p: int
    mu: float
    starts: tuple[int, ...]
    duration: int
    proportions: tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "starts", tuple(int(s) for s in self.starts))
        object.__setattr__(self, "proportions", tuple(float(q) for q in self.proportions))
        if self.n < 1 or self.p < 1 or self.duration < 1:
            raise InvalidArgumentError("n, p and duration must be positive")
        if len(self.starts) != len(self.proportions):
            raise InvalidArgumentError("starts and proportions must have equal length")
        if any(not 0 < q <= 1 for q in self.proportions):
            raise InvalidArgumentError("proportions must lie in (0, 1]")
        if list(self.starts) != sorted(self.starts):
            raise InvalidArgumentError("starts must be sorted")
        for a, b in zip(self.starts, self.starts[1:]):
            if b <= a + self.duration - 1:
                raise InvalidArgumentError(f"planted anomalies starting at {a} and {b} overlap")
        if self.starts and (self.starts[0] < 1 or self.starts[-1] + self.duration - 1 > self.n):
            raise InvalidArgumentError("planted anomaly falls outside the series")

    def affected(self, j: int) -> int:
        """Number of leading variates hit by anomaly ``j``."""
        # tolerance absorbs binary round-off such as 0.06 * 200 = 12.000000000000002
        return max(1, math.ceil(self.proportions[j] * self.p - 1e-9))

    def windows(self) -> list[tuple[int, int, int]]:
        """``(start, end, n_affected)`` per anomaly, 1-based inclusive."""
        return [
            (s, s + self.duration - 1, self.affected(j)) for j, s in enumerate(self.starts)
        ]


def rng_for(seed: int) -> np.random.Generator:
    """Counter-based Philox stream; Gaussian draws use numpy's ziggurat."""
    return np.random.Generator(np.random.Philox(seed))


def simulate(
    n: int | SimSpec,
    p: int = 1,
    mu: float = 0.0,
    starts: Sequence[int] = (),
    duration: int = 1,
    proportions: Sequence[float] = (),
    seed: int = 0,
) -> TimeSeriesMatrix:
    """i.i.d. N(0, 1) noise with mean ``mu`` added in each planted window."""
    spec = n if isinstance(n, SimSpec) else SimSpec(n, p, mu, tuple(starts), duration, tuple(proportions), seed)
    values = rng_for(spec.seed).standard_normal((spec.n, spec.p))
    for start, end, k in spec.windows():
        values[start - 1 : end, :k] += spec.mu
    return TimeSeriesMatrix(values)


# -- worked-example fixtures ---------------------------------------------------


def univariate_example(seed: int = 0) -> np.ndarray:
    """n = 5000: a mean shift, a variance drop, a variance burst and 4 spikes.

    Planted (1-based): mean 4 on 401-500, sd 0.01 on 1601-1800, sd 10 on
    3201-3500, sd-100 spikes at 1000, 2000, 3000 and 4000.
    """
    rng = rng_for(seed)
    x = rng.standard_normal(5000)
    x[400:500] = 4.0 + rng.standard_normal(100)
    x[1600:1800] = 0.01 * rng.standard_normal(200)
    x[3200:3500] = 10.0 * rng.standard_normal(300)
    x[[999, 1999, 2999, 3999]] = 100.0 * rng.standard_normal(4)
    return x


def _spike(v: float) -> float:
    return v * max(1.0, abs(1.0 / v)) * 5.0


def lagged_example(seed: int = 0) -> np.ndarray:
    """Four variates, n = 500, two lagged collective anomalies and 3 spikes.

    First anomaly (1-based): +2 on 151-200 in variate 1, +2 on 171-200 in
    variate 2 and -3 on 161-190 in variate 3. The second anomaly copies
    ``x1[371:390] + 2`` twice into ``x1[351:390]`` and shifts variates 3 and
    4 on 351-400 and 371-400.
    """
    rng = rng_for(seed)
    x = rng.standard_normal((500, 4))
    x[150:200, 0] += 2.0
    x[170:200, 1] += 2.0
    x[160:190, 2] -= 3.0
    x[350:390, 0] = np.tile(x[370:390, 0] + 2.0, 2)
    x[350:400, 2] -= 3.0
    x[370:400, 3] += 2.0
    for row, col in ((450, 3), (99, 3), (49, 1)):
        x[row, col] = _spike(x[row, col])
    return x


def sequential_example(seed: int = 0) -> np.ndarray:
    """n = 5000: sd 0.01 on 1601-1700, sd 10 on 3201-3300, mean 10 on
    4501-4550 and sd-100 spikes at 1000, 2000, 3000 and 4000 (1-based)."""
    rng = rng_for(seed)
    x = rng.standard_normal(5000)
    x[1600:1700] = 0.01 * rng.standard_normal(100)
    x[3200:3300] = 10.0 * rng.standard_normal(100)
    x[4500:4550] = 10.0 + rng.standard_normal(50)
    x[[999, 1999, 2999, 3999]] = 100.0 * rng.standard_normal(4)
    return x
