"""CSV ingestion and versioned JSON results.

Serialized indices (rows, variates) are 1-based; in-memory results are
0-based.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (
    AnomalySet,
    CollectiveAnomaly,
    ComponentRecord,
    DataError,
    DetectorConfig,
    PenaltySchedule,
    PointAnomaly,
    TimeSeriesMatrix,
)

SCHEMA_VERSION = "1.0"
TIME_COLUMNS = ("t", "day", "time")
SCHEMA_PATH = Path(__file__).with_name("results.schema.json")


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def ingest_csv(
    path, has_header: Optional[bool] = None, time_column: bool = False
) -> TimeSeriesMatrix:
    """Read a rectangular numeric CSV.

    ``has_header=None`` treats the first row as a header when any of its
    cells is non-numeric. With ``time_column`` the first column is taken as
    timestamps (conventionally named ``t`` or ``Day``).
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not UTF-8 text ({exc})") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    if has_header is None:
        has_header = not all(_is_number(c.strip()) for c in rows[0])
    names = [c.strip() for c in rows[0]] if has_header else None
    body = rows[1:] if has_header else rows
    if not body:
        raise DataError(f"{path}: header but no data rows")
    width = len(names) if names else len(body[0])
    values = np.empty((len(body), width))
    offset = 2 if has_header else 1
    for i, row in enumerate(body):
        if len(row) != width:
            raise DataError(
                f"{path}: row {i + offset} has {len(row)} fields, expected {width}"
            )
        for j, cell in enumerate(row):
            cell = cell.strip()
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric cell {cell!r} at row {i + offset}, column {j + 1}"
                ) from None
            if not math.isfinite(v):
                raise DataError(
                    f"{path}: non-finite cell {cell!r} at row {i + offset}, column {j + 1}"
                )
            values[i, j] = v
    timestamps = None
    if time_column:
        if width < 2:
            raise DataError(f"{path}: a time column needs at least one data column beside it")
        timestamps, values = values[:, 0], values[:, 1:]
        if names:
            names = names[1:]
    return TimeSeriesMatrix(values, variate_names=names, timestamps=timestamps)


def write_csv_matrix(path, values: np.ndarray, names=None) -> None:
    values = np.asarray(values, dtype=float)
    names = names or [f"x{j + 1}" for j in range(values.shape[1])]

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in values:
            w.writerow([repr(float(v)) for v in row])

    atomic_write(path, write, newline="")


# -- JSON ----------------------------------------------------------------------


def atomic_write(path, writer, newline=None) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline=newline) as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    text = dumps(obj)
    atomic_write(path, lambda fh: fh.write(text))


def _floats(arr) -> Optional[list]:
    return None if arr is None else [float(v) for v in np.asarray(arr).ravel()]


def config_to_dict(config: DetectorConfig) -> dict:
    transform = config.transform
    if callable(transform):
        transform = getattr(transform, "__name__", "custom")
    return {
        "cost_type": config.cost_type,
        "min_seg_len": int(config.min_seg_len),
        "max_seg_len": None if config.max_seg_len is None else int(config.max_seg_len),
        "max_lag": int(config.max_lag),
        "transform": transform,
        "prune": bool(config.prune),
        "allow_meanvar_lag": bool(config.allow_meanvar_lag),
        "meanvar_point_log_penalty": bool(config.meanvar_point_log_penalty),
    }


def penalties_to_dict(pen: Optional[PenaltySchedule]) -> Optional[dict]:
    if pen is None:
        return None
    return {
        "beta": _floats(pen.beta),
        "beta_tilde": float(pen.beta_tilde),
        "marginal_beta": _floats(pen.marginal_beta),
    }


def _opt(v):
    return None if v is None else float(v)


def anomalyset_to_dict(result: AnomalySet, method: str, variate_names=None, extra=None) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "method": method,
        "n": int(result.n),
        "p": int(result.p),
        "variate_names": list(variate_names) if variate_names else None,
        "config": config_to_dict(result.config_echo) if result.config_echo else None,
        "penalties": penalties_to_dict(result.penalties),
        "collective": [
            {
                "start": c.start + 1,
                "end": c.end + 1,
                "components": [
                    {
                        "variate": r.variate + 1,
                        "start_lag": int(r.start_lag),
                        "end_lag": int(r.end_lag),
                        "mean_change": float(r.mean_change),
                        "variance_change": _opt(r.variance_change),
                        "test_statistic": float(r.test_statistic),
                        "raw_mean": _opt(r.raw_mean),
                    }
                    for r in c.components
                ],
            }
            for c in result.collective
        ],
        "points": [
            {"location": a.location + 1, "variate": a.variate + 1, "strength": float(a.strength)}
            for a in result.points
        ],
    }
    if "epoch" in result.diagnostics:
        out["epoch"] = int(result.diagnostics["epoch"])
    if extra:
        out.update(extra)
    return out


def anomalyset_from_dict(d: dict) -> AnomalySet:
    """Inverse of :func:`anomalyset_to_dict` (diagnostics are not restored)."""
    if d.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported schema version {d.get('schema_version')!r}")
    cfg = d.get("config")
    pen = d.get("penalties")
    penalties = (
        PenaltySchedule(np.array(pen["beta"]), pen["beta_tilde"],
                        None if pen["marginal_beta"] is None else np.array(pen["marginal_beta"]))
        if pen else None
    )
    config = DetectorConfig(**cfg) if cfg else None
    collective = tuple(
        CollectiveAnomaly(
            c["start"] - 1,
            c["end"] - 1,
            tuple(
                ComponentRecord(
                    r["variate"] - 1, r["start_lag"], r["end_lag"], r["mean_change"],
                    r["test_statistic"], r["variance_change"], r["raw_mean"],
                )
                for r in c["components"]
            ),
        )
        for c in d["collective"]
    )
    points = tuple(PointAnomaly(a["location"] - 1, a["variate"] - 1, a["strength"]) for a in d["points"])
    diags = {"epoch": d["epoch"]} if "epoch" in d else {}
    return AnomalySet(collective, points, d["n"], d["p"], config, penalties, diags)


def pass_to_dict(result, variate_names=None, transform="robustscale", hc_mode="max") -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "method": "pass",
        "n": int(result.n),
        "p": int(result.p),
        "variate_names": list(variate_names) if variate_names else None,
        "config": {
            "alpha0": int(result.alpha0),
            "min_seg_len": int(result.min_seg_len),
            "max_seg_len": int(result.max_seg_len),
            "transform": transform,
            "hc_mode": hc_mode,
        },
        "lambda_used": float(result.lambda_used),
        "segments": [
            {"start": s.start + 1, "end": s.end + 1, "xstar": float(s.xstar)} for s in result.segments
        ],
    }


def bard_to_dict(summary, priors, n, p, num_draws, seed, transform="robustscale", variate_names=None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "method": "bard",
        "n": int(n),
        "p": int(p),
        "variate_names": list(variate_names) if variate_names else None,
        "config": {"num_draws": int(num_draws), "seed": int(seed), "transform": transform},
        "priors": {k: float(getattr(priors, k)) for k in (
            "p_N", "k_N", "p_A", "k_A", "pi_N", "paffected", "lower", "upper", "h", "alpha")},
        "gamma": float(summary.gamma),
        "threshold": float(summary.threshold),
        "segments": [
            {"start": s.start + 1, "end": s.end + 1, "log_marg_like": float(s.log_marg_like)}
            for s in summary.point_estimate
        ],
    }


def load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_schema() -> dict:
    return load_json(SCHEMA_PATH)
