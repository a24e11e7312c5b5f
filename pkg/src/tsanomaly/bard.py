"""Bayesian abnormal region detection (BARD).

The data are a sequence of segments. Normal segments are followed by abnormal
ones; an abnormal segment is followed by a normal one with probability
``pi_N`` and by another abnormal one otherwise. Segment lengths are ``1 + X``
with ``X`` negative binomial. Inside an abnormal segment each variate is,
independently, unaffected (probability ``1 - paffected``) or shifted by
``+mu`` or ``-mu`` with ``|mu|`` uniform on ``[lower, upper]``.

The filter tracks particles ``(segment type, segment start)`` and works with
likelihoods relative to the all-normal model, so a normal segment
contributes nothing and an abnormal segment ``s..e`` contributes

    R(s, e) = sum_i log[(1 - pa) + pa/G sum_g exp(-L mu_g^2 / 2) cosh(mu_g S_i)]

where ``S_i`` is the window sum of variate ``i`` and ``L`` its length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from .core import InvalidArgumentError, TimeSeriesMatrix
from .transforms import apply_transform

NORMAL, ABNORMAL = 0, 1
LOG_HALF_2PI = 0.5 * math.log(2.0 * math.pi)


# -- negative binomial ---------------------------------------------------------


def _check_nb(k: float, p: float) -> None:
    if not (k > 0 and math.isfinite(k)):
        raise InvalidArgumentError(f"negative binomial k must be positive, got {k}")
    if not 0 < p < 1:
        raise InvalidArgumentError(f"negative binomial p must lie in (0, 1), got {p}")


def negbin_logpmf(x, k: float, p: float):
    """``log C(x+k-1, x) + k log(1-p) + x log p``."""
    _check_nb(k, p)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x != np.floor(x)):
        raise InvalidArgumentError("x must be a non-negative integer")
    return gammaln(x + k) - gammaln(k) - gammaln(x + 1) + k * math.log1p(-p) + x * math.log(p)


def negbin_pmf(x, k: float, p: float):
    out = np.exp(negbin_logpmf(x, k, p))
    return float(out) if np.ndim(out) == 0 else out


def negbin_moments(k: float, p: float) -> tuple[float, float]:
    """Mean and variance of the pmf above: ``k p / (1-p)`` and ``k p / (1-p)^2``.

    At ``p = 1/2`` these coincide with ``k (1-p) / p`` and ``k (1-p) / p^2``.
    """
    _check_nb(k, p)
    return k * p / (1.0 - p), k * p / (1.0 - p) ** 2


def negbin_from_moments(mean: float, var: float) -> tuple[float, float]:
    """``(k, p)`` whose pmf has the given mean and variance (``var > mean``)."""
    if not (mean > 0 and var > mean):
        raise InvalidArgumentError("need 0 < mean < variance for a negative binomial")
    p = 1.0 - mean / var
    return mean * (1.0 - p) / p, p


def _length_tables(k: float, p: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``log h(d)`` and ``log(1 - h(d))`` for segment lengths ``d = 0 .. n``.

    Length is ``D = 1 + X``; ``h(d) = P(D = d | D >= d)``. Index 0 is unused.
    """
    dist = stats.nbinom(k, 1.0 - p)
    d = np.arange(n + 2, dtype=float)
    log_surv = dist.logsf(d - 2)  # log P(D >= d) = log P(X >= d - 1)
    log_surv[:2] = 0.0
    log_h = dist.logpmf(d - 1) - log_surv
    log_h[0] = -np.inf
    log_stay = np.empty_like(log_h)
    log_stay[:-1] = log_surv[1:] - log_surv[:-1]
    log_stay[-1] = -np.inf
    return log_h[: n + 1], log_stay[: n + 1]


# -- priors --------------------------------------------------------------------


@dataclass(frozen=True)
class BardPriors:
    p_N: float
    k_N: float
    p_A: float
    k_A: float
    pi_N: float = 0.9
    paffected: float = 0.05
    lower: float = 0.5
    upper: float = 1.5
    h: float = 0.25
    alpha: float = 1e-4

    def __post_init__(self):
        _check_nb(self.k_N, self.p_N)
        _check_nb(self.k_A, self.p_A)
        for name in ("pi_N", "paffected"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise InvalidArgumentError(f"{name} must lie in (0, 1), got {v}")
        if not 0 < self.lower <= self.upper:
            raise InvalidArgumentError("need 0 < lower <= upper")
        if not self.h > 0:
            raise InvalidArgumentError("h must be positive")
        if self.upper > self.lower and self.h > self.upper - self.lower:
            raise InvalidArgumentError("h exceeds upper - lower: no quadrature points")
        if not 0 <= self.alpha < 1:
            raise InvalidArgumentError("alpha must lie in [0, 1)")

    @classmethod
    def from_moments(
        cls,
        normal_mean: float = 190.0,
        normal_sd: float = 62.0,
        abnormal_mean: float = 10.0,
        abnormal_sd: float = 4.0,
        **kwargs,
    ) -> "BardPriors":
        """Priors whose segment lengths have the given mean and sd."""
        k_n, p_n = negbin_from_moments(normal_mean - 1.0, normal_sd**2)
        k_a, p_a = negbin_from_moments(abnormal_mean - 1.0, abnormal_sd**2)
        return cls(p_N=p_n, k_N=k_n, p_A=p_a, k_A=k_a, **kwargs)

    @classmethod
    def default(cls, **kwargs) -> "BardPriors":
        return cls.from_moments(**kwargs)

    def grid(self) -> np.ndarray:
        return quadrature_grid(self.lower, self.upper, self.h)


def quadrature_grid(lower: float, upper: float, h: float) -> np.ndarray:
    """``lower, lower + h, ...`` up to ``upper`` (rectangle rule nodes)."""
    if upper > lower and h > upper - lower:
        raise InvalidArgumentError("h exceeds upper - lower: no quadrature points")
    count = int(math.floor((upper - lower) / h + 1e-9)) + 1
    return lower + h * np.arange(count)


def _logcosh(y: np.ndarray) -> np.ndarray:
    a = np.abs(y)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def _log_ratio(sums: np.ndarray, lengths: np.ndarray, grid: np.ndarray, paffected: float):
    """``R`` for windows with per-variate sums ``sums`` (m, p) and lengths (m,)."""
    mu = grid[None, None, :]
    L = lengths.astype(float)[:, None, None]
    log_terms = math.log(paffected / grid.size) - 0.5 * L * mu * mu + _logcosh(mu * sums[:, :, None])
    mixed = np.logaddexp(math.log1p(-paffected), logsumexp(log_terms, axis=2))
    return mixed.sum(axis=1)


def normal_loglik(window) -> float:
    w = np.asarray(window, dtype=float)
    return float(-0.5 * np.sum(w * w) - w.size * LOG_HALF_2PI)


def abnormal_marginal_loglik(window, priors: BardPriors) -> float:
    """Log marginal likelihood of ``window`` (rows of one segment) as abnormal."""
    w = np.asarray(window, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    ratio = _log_ratio(w.sum(axis=0)[None, :], np.array([w.shape[0]]), priors.grid(), priors.paffected)
    return float(ratio[0]) + normal_loglik(w)


def log_marg_like(window, priors: BardPriors) -> float:
    """Abnormal minus normal log-likelihood of a window."""
    w = np.asarray(window, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    return float(_log_ratio(w.sum(axis=0)[None, :], np.array([w.shape[0]]), priors.grid(), priors.paffected)[0])


# -- filter --------------------------------------------------------------------


@dataclass
class FilterStep:
    types: np.ndarray
    starts: np.ndarray  # 0-based start of the current segment
    log_weights: np.ndarray  # normalised


@dataclass
class FilterOutput:
    x: np.ndarray
    priors: BardPriors
    steps: list
    log_evidence: float
    log_h: np.ndarray = field(repr=False)
    log_trans: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def window_log_ratio(self, s: int, e: int) -> float:
        """``R`` for rows ``s..e`` (0-based inclusive)."""
        return log_marg_like(self.x[s : e + 1], self.priors)


def _transition_matrix(pi_n: float) -> np.ndarray:
    # rows: from type, cols: to type
    with np.errstate(divide="ignore"):
        return np.log(np.array([[0.0, 1.0], [pi_n, 1.0 - pi_n]]))


def bard_filter(
    x,
    priors: Optional[BardPriors] = None,
    transform="robustscale",
    seed: int = 0,
) -> FilterOutput:
    """Forward particle recursion with rejection-control pruning.

    ``priors.alpha = 0`` disables pruning and gives the exact filter.
    """
    priors = priors or BardPriors.default()
    data = TimeSeriesMatrix.from_array(x)
    z = apply_transform(np.asarray(data.values), transform)
    n, p = z.shape
    grid = priors.grid()
    prefix = np.vstack([np.zeros(p), np.cumsum(z, axis=0)])
    log_h = np.vstack([_length_tables(priors.k_N, priors.p_N, n)[0], _length_tables(priors.k_A, priors.p_A, n)[0]])
    log_stay = np.vstack([_length_tables(priors.k_N, priors.p_N, n)[1], _length_tables(priors.k_A, priors.p_A, n)[1]])
    log_trans = _transition_matrix(priors.pi_N)
    rng = np.random.Generator(np.random.Philox(seed))
    alpha = priors.alpha

    types = np.array([NORMAL, ABNORMAL], dtype=np.int8)
    starts = np.zeros(2, dtype=np.int64)
    logw = np.log(np.array([priors.pi_N, 1.0 - priors.pi_N]))
    ratio = np.zeros(2)  # R(start, t-1) carried by each particle
    steps = []
    log_evidence = 0.0
    for t in range(n):
        if t > 0:
            d = t - starts  # length of the current segment up to t-1
            leave = logw + log_h[types, d]
            new_logw = np.array(
                [
                    logsumexp(leave + log_trans[types, NORMAL]),
                    logsumexp(leave + log_trans[types, ABNORMAL]),
                ]
            )
            logw = np.concatenate([logw + log_stay[types, d], new_logw])
            types = np.concatenate([types, np.array([NORMAL, ABNORMAL], dtype=np.int8)])
            starts = np.concatenate([starts, np.array([t, t])])
            ratio = np.concatenate([ratio, np.zeros(2)])
            alive = np.isfinite(logw)
            if not alive.all():
                logw, types, starts, ratio = logw[alive], types[alive], starts[alive], ratio[alive]
        ab = types == ABNORMAL
        if ab.any():
            s_ab = starts[ab]
            sums = prefix[t + 1] - prefix[s_ab]
            new_ratio = _log_ratio(sums, t + 1 - s_ab, grid, priors.paffected)
            logw[ab] += new_ratio - ratio[ab]
            ratio[ab] = new_ratio
        norm = logsumexp(logw)
        log_evidence += norm
        logw = logw - norm
        if alpha > 0:
            w = np.exp(logw)
            small = w < alpha
            if small.any():
                keep = ~small | (rng.random(w.size) < w / alpha)
                logw = np.where(small, math.log(alpha), logw)
                logw, types, starts, ratio = logw[keep], types[keep], starts[keep], ratio[keep]
                norm = logsumexp(logw)
                logw = logw - norm
        steps.append(FilterStep(types.copy(), starts.copy(), logw.copy()))
    return FilterOutput(z, priors, steps, float(log_evidence), log_h, log_trans)


# -- sampler -------------------------------------------------------------------


@dataclass(frozen=True)
class BardSegment:
    start: int
    end: int
    log_marg_like: float


@dataclass(frozen=True)
class PosteriorSummary:
    draws: np.ndarray  # (num_draws, n) of 0/1
    marginal_prob: np.ndarray
    point_estimate: tuple[BardSegment, ...]
    gamma: float

    @property
    def threshold(self) -> float:
        return 1.0 / (1.0 + self.gamma)


def _cdf(log_w: np.ndarray) -> np.ndarray:
    w = np.exp(log_w - logsumexp(log_w))
    c = np.cumsum(w)
    c[-1] = 1.0
    return c


def sample_segmentations(out: FilterOutput, num_draws: int, seed: int = 0) -> list:
    """Backward draws; each is a list of ``(type, start, end)`` (0-based inclusive)."""
    if num_draws < 1:
        raise InvalidArgumentError("num_draws must be at least 1")
    rng = np.random.Generator(np.random.Philox(seed))
    n = out.n
    cache: dict = {}

    def conditional(t: int, next_type: int):
        # distribution of the segment covering t given a segment of next_type starts at t+1
        key = (t, next_type)
        if key not in cache:
            st = out.steps[t]
            lw = st.log_weights + out.log_h[st.types, t + 1 - st.starts] + out.log_trans[st.types, next_type]
            cache[key] = (_cdf(lw), st)
        return cache[key]

    last = out.steps[n - 1]
    final_cdf = _cdf(last.log_weights)
    draws = []
    for _ in range(num_draws):
        j = min(int(np.searchsorted(final_cdf, rng.random(), side="right")), final_cdf.size - 1)
        ty, s = int(last.types[j]), int(last.starts[j])
        segs = [(ty, s, n - 1)]
        while s > 0:
            cdf, st = conditional(s - 1, ty)
            j = min(int(np.searchsorted(cdf, rng.random(), side="right")), cdf.size - 1)
            e = s - 1
            ty, s = int(st.types[j]), int(st.starts[j])
            segs.append((ty, s, e))
        draws.append(segs[::-1])
    return draws


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]


def bard_sampler(
    out: FilterOutput, num_draws: int = 1000, gamma: float = 1.0 / 3.0, seed: int = 0
) -> PosteriorSummary:
    """Posterior draws, marginal abnormal probabilities and point estimate."""
    if not gamma > 0:
        raise InvalidArgumentError("gamma must be positive")
    n = out.n
    draws = np.zeros((num_draws, n), dtype=np.int8)
    for i, segs in enumerate(sample_segmentations(out, num_draws, seed)):
        for ty, s, e in segs:
            if ty == ABNORMAL:
                draws[i, s : e + 1] = 1
    marginal = draws.mean(axis=0)
    flagged = marginal > 1.0 / (1.0 + gamma)
    estimate = tuple(BardSegment(s, e, out.window_log_ratio(s, e)) for s, e in _runs(flagged))
    return PosteriorSummary(draws, marginal, estimate, float(gamma))


def bard(
    x,
    priors: Optional[BardPriors] = None,
    num_draws: int = 1000,
    gamma: float = 1.0 / 3.0,
    transform="robustscale",
    seed: int = 0,
) -> PosteriorSummary:
    """Filter then sample. ``seed`` drives both pruning and the draws."""
    ss = np.random.SeedSequence(seed).generate_state(2)
    out = bard_filter(x, priors, transform, seed=int(ss[0]))
    return bard_sampler(out, num_draws, gamma, seed=int(ss[1]))
