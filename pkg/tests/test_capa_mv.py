import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import mv_enumerate, mv_window_value, point_gain
from tsanomaly.capa_mv import capa_mv, component_lagged_saving, pool, pooled_saving, scapa_mv
from tsanomaly.capa_uv import SavingCost, capa_uv
from tsanomaly.core import (
    DetectorConfig,
    InvalidArgumentError,
    PenaltySchedule,
    default_penalties_mv,
    inflated_penalties_mv,
)
from tsanomaly.datagen import lagged_example


def summary(result):
    return [
        (c.start, c.end, [(r.variate, r.start_lag, r.end_lag) for r in c.components])
        for c in result.collective
    ]


def test_pool_example():
    total, k, order = pool([10.0, 4.0, 1.0], [3.0, 3.0, 3.0])
    assert (total, k) == (8.0, 2)
    assert order[:2].tolist() == [0, 1]


def test_pool_all_zero_rejected():
    total, _, _ = pool([0.0, 0.0], [1.0, 0.5])
    assert total <= 0


def test_pooled_saving_single_component():
    x = np.random.default_rng(0).standard_normal(30)
    cost = SavingCost(x, "mean")
    ps = pooled_saving([cost], 3, 20, 0, 2, [5.0])
    assert ps.total == pytest.approx(cost.saving(3, 21) - 5.0)
    assert ps.k_star == 1


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(0, 50), min_size=1, max_size=6),
    st.integers(0, 5),
    st.floats(0, 10),
)
def test_pool_monotone_in_each_beta(savings, idx, bump):
    p = len(savings)
    beta = np.linspace(5.0, 1.0, p)
    raised = beta.copy()
    raised[idx % p] += bump
    assert pool(savings, raised)[0] <= pool(savings, beta)[0] + 1e-12


def test_lag_search_w0_and_tie_break():
    x = np.random.default_rng(1).standard_normal(50)
    cost = SavingCost(x, "mean")
    val, d, f = component_lagged_saving(cost, 5, 30, 0, 10)
    assert (d, f) == (0, 0) and val == cost.saving(5, 31)
    zero = SavingCost(np.zeros(50), "mean")
    assert component_lagged_saving(zero, 5, 30, 4, 10) == (0.0, 0, 0)


def test_lag_search_finds_late_start():
    x = np.zeros(100)
    x[50:80] = 3.0
    cost = SavingCost(x, "mean")
    val, d, f = component_lagged_saving(cost, 40, 79, 20, 10)
    assert (d, f) == (10, 0)
    assert val == pytest.approx(30 * 9.0)


def test_lag_search_respects_inner_minimum():
    x = np.zeros(40)
    x[10:12] = 10.0
    cost = SavingCost(x, "mean")
    # the short burst cannot be isolated: inner windows keep >= 8 points
    val, d, f = component_lagged_saving(cost, 4, 15, 6, 8)
    assert (15 - f) - (4 + d) + 1 >= 8
    with pytest.raises(InvalidArgumentError):
        component_lagged_saving(cost, 4, 8, 1, 8)


@pytest.mark.parametrize("seed", range(8))
def test_reduction_to_univariate(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(300)
    x[100:130] += 2.5
    x[200] = 9.0
    for ct in ("mean", "meanvar"):
        pen = PenaltySchedule(np.array([12.0]), 11.0, np.array([12.0]))
        uv = capa_uv(x, cost_type=ct, penalties=pen)
        mv = capa_mv(x[:, None], cost_type=ct, penalties=pen)
        assert uv.same_anomalies(mv)


def _achieved(x, res, w, min_len, ct, mb, bt):
    total = 0.0
    for c in res.collective:
        total += mv_window_value(x, c.start, c.end + 1, w, min_len, ct, mb)
    for a in res.points:
        total += point_gain(float(x[a.location, a.variate]), ct, bt)
    return total


@pytest.mark.parametrize("seed", range(25))
def test_oracle_tiny(seed):
    rng = np.random.default_rng(500 + seed)
    n = int(rng.integers(3, 11))
    p = int(rng.integers(1, 4))
    w = int(rng.integers(0, 2))
    ct = ["mean", "meanvar"][seed % 2]
    x = rng.standard_normal((n, p))
    if n >= 5:
        a = int(rng.integers(0, n - 3))
        x[a : a + 4, : int(rng.integers(1, p + 1))] += rng.normal(0, 3)
    mb = np.sort(rng.uniform(0.5, 8.0, p))[::-1]
    bt = float(rng.uniform(2.0, 10.0))
    pen = PenaltySchedule(np.array([mb[0]]), bt, mb)
    cfg = DetectorConfig(cost_type=ct, min_seg_len=2, max_lag=w, transform="none",
                         penalties=pen, allow_meanvar_lag=True)
    seq = scapa_mv(x, cfg)
    truth = mv_enumerate(x, w, 2, ct, mb, bt)
    assert seq.best[-1] == pytest.approx(truth, abs=1e-9)
    assert _achieved(x, seq.final(), w, 2, ct, mb, bt) == pytest.approx(truth, abs=1e-9)


def _lag_data(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((200, 3))
    x[60:100, 0] += 2.0
    x[66:100, 1] += 2.5
    x[60:92, 2] -= 2.0
    return x


@pytest.mark.parametrize("seed", range(4))
def test_time_reversal_swaps_lags(seed):
    x = _lag_data(seed)
    pen = inflated_penalties_mv(200, 3, 8, [0.0] * 3)
    fwd = scapa_mv(x, max_lag=8, penalties=pen, transform="none")
    bwd = scapa_mv(x[::-1], max_lag=8, penalties=pen, transform="none")
    assert fwd.best[-1] == pytest.approx(bwd.best[-1], rel=1e-12)
    n = x.shape[0]
    mirrored = sorted(
        (n - 1 - e, n - 1 - s, [(v, b, a) for v, a, b in comps]) for s, e, comps in summary(fwd.final())
    )
    assert mirrored == summary(bwd.final())


@pytest.mark.parametrize("seed", range(4))
def test_permutation_equivariance(seed):
    x = _lag_data(seed)
    perm = np.array([2, 0, 1])
    pen = inflated_penalties_mv(200, 3, 8, [0.0] * 3)
    a = capa_mv(x, max_lag=8, penalties=pen)
    b = capa_mv(x[:, perm], max_lag=8, penalties=pen)
    # column j of the permuted data is original variate perm[j]
    relabelled = [
        (s, e, sorted((int(perm[v]), d, f) for v, d, f in comps)) for s, e, comps in summary(b)
    ]
    assert relabelled == summary(a)
    assert sorted((p.location, int(perm[p.variate])) for p in b.points) == [
        (p.location, p.variate) for p in a.points
    ]


def test_marginal_length_checked():
    pen = PenaltySchedule(np.array([5.0]), 5.0, np.array([5.0, 1.0]))
    with pytest.raises(InvalidArgumentError):
        capa_mv(np.zeros((50, 3)), penalties=pen, transform="none")


def test_default_cost_type_is_mean():
    res = capa_mv(np.random.default_rng(3).standard_normal((100, 2)))
    assert res.config_echo.cost_type == "mean"
    assert res.penalties == default_penalties_mv(100, 2)


def test_point_anomalies_reported_per_variate():
    x = np.random.default_rng(4).standard_normal((300, 5))
    x[120, 1] = 15.0
    x[120, 3] = -15.0
    res = capa_mv(x)
    assert [(a.location, a.variate) for a in res.points] == [(120, 1), (120, 3)]


@pytest.mark.parametrize("seed", range(10))
def test_sequential_lag_story(seed):
    # the lagged fixture replayed online with lag-aware penalties
    x = lagged_example(seed)
    pen = inflated_penalties_mv(500, 4, 20, [0.0] * 4)
    seq = scapa_mv(x, max_lag=20, penalties=pen)
    first = next(
        ep for ep in range(150, 200) if any(c.end >= 140 for c in seq.at_epoch(ep).collective)
    )
    assert first <= 160
    early = [c for c in seq.at_epoch(first).collective if c.end >= 140][0]
    assert 0 in early.variates
    at170 = [c for c in seq.at_epoch(170).collective if c.end >= 140]
    assert len(at170) == 1
    lags = {r.variate: r.start_lag for r in at170[0].components}
    assert {0, 2} <= set(lags)
    assert 8 <= lags[2] - lags[0] + (at170[0].start - 150) <= 12
    if seed == 0:
        offline = capa_mv(x, max_lag=20, penalties=pen, transform="sequential")
        assert seq.final().same_anomalies(offline)
