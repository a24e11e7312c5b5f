"""Collective and point anomaly detection for univariate and multivariate series."""

from .bard import BardPriors, PosteriorSummary, bard_filter, bard_sampler
from .capa_mv import capa_mv, pooled_saving, scapa_mv
from .capa_uv import SequentialResult, capa_uv, scapa_uv
from .core import (
    AnomalySet,
    CollectiveAnomaly,
    ComponentRecord,
    DataError,
    DegenerateScaleError,
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
from .datagen import SimSpec, simulate
from .folding import period_average
from .io import ingest_csv
from .passdetect import PassResult, higher_criticism, pass_detect
from .transforms import ac_corrected, robust_ar1, robustscale, sequential_robustscale

__all__ = [
    "AnomalySet", "BardPriors", "CollectiveAnomaly", "ComponentRecord", "DataError",
    "DegenerateScaleError", "DetectorConfig", "InvalidArgumentError", "PassResult",
    "PenaltySchedule", "PointAnomaly", "PosteriorSummary", "SequentialResult", "SimSpec",
    "TimeSeriesMatrix", "ac_corrected", "bard_filter", "bard_sampler", "capa_mv",
    "capa_uv", "default_penalties_mv", "default_penalties_uv", "higher_criticism",
    "inflated_penalties_mv", "inflated_penalties_uv", "ingest_csv", "pass_detect",
    "period_average", "pooled_saving", "robust_ar1", "robustscale", "scapa_mv", "scapa_uv",
    "sequential_robustscale", "simulate",
]
