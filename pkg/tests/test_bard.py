import math

import numpy as np
import pytest

from oracles import bard_enumerate, window_log_ratio
from tsanomaly.bard import (
    ABNORMAL,
    BardPriors,
    abnormal_marginal_loglik,
    bard,
    bard_filter,
    bard_sampler,
    log_marg_like,
    negbin_from_moments,
    negbin_moments,
    negbin_pmf,
    normal_loglik,
    quadrature_grid,
)
from tsanomaly.core import InvalidArgumentError


def test_negbin_examples():
    assert negbin_pmf(0, 1, 0.5) == pytest.approx(0.5)
    assert negbin_moments(1, 0.5) == (1.0, 2.0)
    assert negbin_pmf(3, 2, 0.25) == pytest.approx(0.03515625, rel=1e-12)
    with pytest.raises(InvalidArgumentError):
        negbin_pmf(1, 0.0, 0.5)
    with pytest.raises(InvalidArgumentError):
        negbin_pmf(1, 1.0, 1.0)


def test_negbin_moments_match_pmf():
    k, p = 3.5, 0.7
    x = np.arange(2000)
    pmf = negbin_pmf(x, k, p)
    mean = float(np.sum(x * pmf))
    var = float(np.sum((x - mean) ** 2 * pmf))
    m, v = negbin_moments(k, p)
    assert mean == pytest.approx(m, rel=1e-9) and var == pytest.approx(v, rel=1e-9)
    assert negbin_from_moments(m, v) == pytest.approx((k, p))


def test_default_priors_follow_length_moments():
    pr = BardPriors.default()
    assert pr.p_N == pytest.approx(1 - 189 / 3844)
    assert pr.k_N == pytest.approx(189 * (189 / 3844) / (1 - 189 / 3844))
    assert pr.p_A == pytest.approx(0.4375) and pr.k_A == pytest.approx(9 * 0.5625 / 0.4375)
    mean_n, var_n = negbin_moments(pr.k_N, pr.p_N)
    assert 1 + mean_n == pytest.approx(190.0) and math.sqrt(var_n) == pytest.approx(62.0)
    mean_a, var_a = negbin_moments(pr.k_A, pr.p_A)
    assert 1 + mean_a == pytest.approx(10.0) and math.sqrt(var_a) == pytest.approx(4.0)
    assert (pr.pi_N, pr.paffected, pr.lower, pr.upper, pr.h) == (0.9, 0.05, 0.5, 1.5, 0.25)


def test_quadrature_grid():
    np.testing.assert_allclose(quadrature_grid(0.5, 1.5, 0.25), [0.5, 0.75, 1.0, 1.25, 1.5])
    np.testing.assert_allclose(quadrature_grid(0.5, 1.4, 0.25), [0.5, 0.75, 1.0, 1.25])
    assert quadrature_grid(1.0, 1.0, 0.25).tolist() == [1.0]
    with pytest.raises(InvalidArgumentError):
        quadrature_grid(0.5, 0.6, 0.25)


def test_abnormal_marginal_loglik_value():
    pr = BardPriors.default()
    assert abnormal_marginal_loglik(np.array([1.0]), pr) == pytest.approx(-1.42358300819768, abs=1e-12)
    assert log_marg_like(np.array([1.0]), pr) == pytest.approx(-0.00464447499300617, abs=1e-12)


def test_abnormal_loglik_symmetry_and_limit():
    pr = BardPriors.default()
    w = np.random.default_rng(0).standard_normal((7, 3)) + 0.8
    assert abnormal_marginal_loglik(w, pr) == pytest.approx(abnormal_marginal_loglik(-w, pr), rel=1e-13)
    tiny = BardPriors.default(paffected=1e-12)
    assert abnormal_marginal_loglik(w, tiny) == pytest.approx(normal_loglik(w), abs=1e-9)
    assert log_marg_like(w, pr) == pytest.approx(abnormal_marginal_loglik(w, pr) - normal_loglik(w))
    assert log_marg_like(w, pr) == pytest.approx(window_log_ratio(w, pr.grid(), pr.paffected), rel=1e-12)


def test_prior_validation():
    with pytest.raises(InvalidArgumentError):
        BardPriors.default(pi_N=1.0)
    with pytest.raises(InvalidArgumentError):
        BardPriors.default(lower=1.0, upper=0.5)
    with pytest.raises(InvalidArgumentError):
        BardPriors.default(alpha=1.0)


SMALL = dict(p_N=0.6, k_N=2.0, p_A=0.5, k_A=1.5, pi_N=0.7, paffected=0.3, alpha=0.0)


def _filter_dist(step):
    out = {}
    for ty, s, lw in zip(step.types, step.starts, step.log_weights):
        out[(int(ty), int(s))] = out.get((int(ty), int(s)), 0.0) + math.exp(lw)
    return out


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("p", [1, 2])
def test_exact_filter_matches_enumeration(seed, p):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    z = rng.standard_normal((n, p))
    z[n // 2 :, 0] += 1.5
    pr = BardPriors(**SMALL)
    out = bard_filter(z, pr, transform="none")
    for t in range(n):
        got = _filter_dist(out.steps[t])
        want = bard_enumerate(z, pr, t)
        keys = set(got) | set(want)
        tv = 0.5 * sum(abs(got.get(k, 0.0) - want.get(k, 0.0)) for k in keys)
        assert tv < 1e-10


def test_weights_normalised_every_step():
    x = np.random.default_rng(1).standard_normal((80, 3))
    out = bard_filter(x, BardPriors.default())
    for st in out.steps:
        assert math.fsum(np.exp(st.log_weights)) == pytest.approx(1.0, abs=1e-12)


def test_all_zeros_strong_normal_prior():
    pr = BardPriors.default(pi_N=0.999, alpha=0.0)
    out = bard_filter(np.zeros((40, 5)), pr, transform="none")
    # one normal segment from the start is the only segmentation with no abnormal part
    no_abnormal = _filter_dist(out.steps[-1])[(0, 0)]
    assert no_abnormal > 0.99
    summary = bard_sampler(out, num_draws=2000, seed=3)
    assert np.mean(summary.draws.sum(axis=1) == 0) > 0.99


def test_pruning_robust_top_segmentation():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((50, 4))
    x[20:32, :3] += 2.5
    exact = bard_filter(x, BardPriors.default(alpha=0.0))
    pruned = bard_filter(x, BardPriors.default(alpha=1e-12))
    a = bard_sampler(exact, 500, seed=9)
    b = bard_sampler(pruned, 500, seed=9)
    assert [(s.start, s.end) for s in a.point_estimate] == [(s.start, s.end) for s in b.point_estimate]
    assert len(a.point_estimate) == 1
    np.testing.assert_allclose(a.marginal_prob, b.marginal_prob, atol=0.02)


def test_sampler_summaries():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((120, 6))
    x[40:55, :3] += 1.5
    out = bard_filter(x, BardPriors.default())
    s = bard_sampler(out, 300, gamma=1 / 3, seed=1)
    assert s.threshold == pytest.approx(0.75)
    np.testing.assert_array_equal(s.marginal_prob, s.draws.mean(axis=0))
    flagged = s.marginal_prob > 0.75
    runs = [(seg.start, seg.end) for seg in s.point_estimate]
    mask = np.zeros(120, dtype=bool)
    for a, b in runs:
        mask[a : b + 1] = True
        assert not (a > 0 and flagged[a - 1]) and not (b < 119 and flagged[b + 1])
    np.testing.assert_array_equal(mask, flagged)
    for seg in s.point_estimate:
        assert seg.log_marg_like == pytest.approx(log_marg_like(out.x[seg.start : seg.end + 1], out.priors))
    # a higher threshold only ever drops flagged times
    strict = bard_sampler(out, 300, gamma=0.05, seed=1)
    assert not np.any((strict.marginal_prob > strict.threshold) & ~flagged)


def test_single_draw():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((60, 4))
    x[20:30] += 2
    out = bard_filter(x, BardPriors.default())
    s = bard_sampler(out, 1, gamma=1.0, seed=0)
    assert set(np.unique(s.marginal_prob)) <= {0.0, 1.0}
    draw = s.draws[0].astype(bool)
    mask = np.zeros(60, dtype=bool)
    for seg in s.point_estimate:
        mask[seg.start : seg.end + 1] = True
    np.testing.assert_array_equal(mask, draw)


def test_draws_are_valid_segmentations():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((90, 3))
    x[30:45] += 1.8
    from tsanomaly.bard import sample_segmentations

    out = bard_filter(x, BardPriors.default())
    for segs in sample_segmentations(out, 50, seed=2):
        assert segs[0][1] == 0 and segs[-1][2] == 89
        for (t1, s1, e1), (t2, s2, e2) in zip(segs, segs[1:]):
            assert s2 == e1 + 1
            assert not (t1 != ABNORMAL and t2 != ABNORMAL)


def test_bard_is_reproducible():
    x = np.random.default_rng(7).standard_normal((100, 5))
    a = bard(x, seed=11, num_draws=200)
    b = bard(x, seed=11, num_draws=200)
    np.testing.assert_array_equal(a.draws, b.draws)
    with pytest.raises(InvalidArgumentError):
        bard_sampler(bard_filter(x), num_draws=0)
    with pytest.raises(InvalidArgumentError):
        bard_sampler(bard_filter(x), gamma=0.0)
