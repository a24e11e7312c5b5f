import math

import numpy as np
import pytest

from tsanomaly.core import (
    AnomalySet,
    CollectiveAnomaly,
    ComponentRecord,
    DataError,
    DetectorConfig,
    InvalidArgumentError,
    PenaltySchedule,
    PointAnomaly,
    TimeSeriesMatrix,
    default_penalties_mv,
    default_penalties_uv,
    inflated_penalties_mv,
    inflated_penalties_uv,
)

# reference values evaluated independently at 30 digits
LN5000_3 = 25.5515795742487123
LN5000_4 = 34.0687727656649497


def test_default_uv_penalties():
    pen = default_penalties_uv(5000, "mean")
    assert pen.beta[0] == pytest.approx(LN5000_3, abs=1e-9)
    assert pen.beta_tilde == pytest.approx(LN5000_3, abs=1e-9)
    pen = default_penalties_uv(5000, "meanvar")
    assert pen.beta[0] == pytest.approx(LN5000_4, abs=1e-9)
    assert pen.beta_tilde == pen.beta[0]


def test_default_uv_at_e_is_three():
    assert default_penalties_uv(math.e, "mean").beta[0] == pytest.approx(3.0, abs=1e-12)


def test_inflated_uv():
    assert inflated_penalties_uv(22695, 0.97).beta[0] == pytest.approx(1975.89028323344, abs=1e-6)
    assert inflated_penalties_uv(100, 0.5).beta[0] == pytest.approx(41.4465316738928, abs=1e-6)
    assert inflated_penalties_uv(100, 0.0).beta[0] == pytest.approx(3 * math.log(100))


def test_inflated_uv_rejects_unit_root():
    with pytest.raises(InvalidArgumentError):
        inflated_penalties_uv(100, 1.0)


def test_default_mv():
    pen = default_penalties_mv(500, 200)
    assert pen.beta_tilde == pytest.approx(34.5387763949107, abs=1e-9)
    assert pen.marginal_beta[0] == pytest.approx(29.2404590283626, abs=1e-9)
    assert pen.marginal_beta[1] == pytest.approx(2 * math.log(199))
    assert pen.marginal_beta[-1] == 0.0
    assert np.all(np.diff(pen.marginal_beta) <= 0)


def test_inflated_mv():
    pen = inflated_penalties_mv(100, 4, 20, [0.5, 0.0, 0.0, 0.0])
    assert pen.beta_tilde == pytest.approx(35.9487872826479, abs=1e-6)
    assert pen.marginal_beta[0] == pytest.approx(54.2159219089884, abs=1e-6)
    assert pen.marginal_beta[1] == pytest.approx(8.86163359768663, abs=1e-6)
    # rho estimates are used in decreasing order
    same = inflated_penalties_mv(100, 4, 20, [0.0, 0.0, 0.5, 0.0])
    assert np.array_equal(pen.marginal_beta, same.marginal_beta)


def test_inflated_mv_constant_rho_is_non_increasing():
    pen = inflated_penalties_mv(1000, 6, 3, [0.3] * 6)
    assert np.all(np.diff(pen.marginal_beta) <= 0)


def test_penalty_schedule_lengths():
    pen = PenaltySchedule(np.array([5.0]), 5.0)
    assert pen.beta_for_lengths(2, 6).tolist() == [5.0] * 5
    vec = PenaltySchedule(np.arange(1.0, 6.0), 5.0)
    assert vec.beta_for_lengths(2, 6).tolist() == [1, 2, 3, 4, 5]
    with pytest.raises(InvalidArgumentError):
        vec.beta_for_lengths(2, 8)


@pytest.mark.parametrize("beta,tilde", [([0.0], 1.0), ([1.0], 0.0), ([np.inf], 1.0), ([], 1.0)])
def test_penalty_schedule_validation(beta, tilde):
    with pytest.raises(InvalidArgumentError):
        PenaltySchedule(np.array(beta), tilde)


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        DetectorConfig(min_seg_len=1)
    with pytest.raises(InvalidArgumentError):
        DetectorConfig(cost_type="median")
    with pytest.raises(InvalidArgumentError):
        DetectorConfig(min_seg_len=10, max_seg_len=5)
    with pytest.raises(InvalidArgumentError):
        DetectorConfig(cost_type="meanvar", max_lag=3)
    DetectorConfig(cost_type="meanvar", max_lag=3, allow_meanvar_lag=True)
    assert DetectorConfig(max_seg_len=None).resolved_max_seg_len(50) == 50
    assert DetectorConfig(max_seg_len=500).resolved_max_seg_len(50) == 50


def test_matrix_rejects_nonfinite():
    with pytest.raises(DataError, match="row 2, column 1"):
        TimeSeriesMatrix(np.array([[1.0, 2.0], [np.nan, 1.0]]))


def test_matrix_promotes_vector_and_is_read_only():
    m = TimeSeriesMatrix(np.arange(5.0))
    assert (m.n, m.p) == (5, 1)
    with pytest.raises(ValueError):
        m.values[0, 0] = 3.0


def test_anomaly_set_sorted_and_diagnostics_ignored():
    rec = ComponentRecord(0, 0, 0, 1.0, 2.0)
    a = AnomalySet(
        (CollectiveAnomaly(20, 30, (rec,)), CollectiveAnomaly(2, 8, (rec,))),
        (PointAnomaly(9, 1, 3.0), PointAnomaly(9, 0, 2.0)),
        40, 2, diagnostics={"x": 1},
    )
    assert [c.start for c in a.collective] == [2, 20]
    assert [(p.location, p.variate) for p in a.points] == [(9, 0), (9, 1)]
    b = AnomalySet(a.collective, a.points, 40, 2, diagnostics={"y": 2})
    assert a == b


def test_penalty_schedule_equality_with_vectors():
    a = default_penalties_mv(100, 5)
    b = default_penalties_mv(100, 5)
    assert a == b and hash(a) == hash(b)
    assert a != default_penalties_mv(100, 6)
    assert a != a.scaled(2.0)
