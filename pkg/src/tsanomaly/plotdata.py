"""Plot-ready data files: flagged series CSV, BARD marginals CSV, quick SVG."""

from __future__ import annotations

import csv
from xml.sax.saxutils import escape

import numpy as np

from .core import AnomalySet
from .io import atomic_write

TYPICAL, COLLECTIVE, LAG, POINT = "typical", "collective", "lag", "point"
SVG_MAX_VARIATES = 20
_COLOURS = {COLLECTIVE: "#1f5fbf", LAG: "#8fb3e8", POINT: "#d62728"}


def flag_matrix(result: AnomalySet) -> np.ndarray:
    """``n x p`` array of flags.

    Inside a collective anomaly, a component's effective window is
    ``collective`` and the lagged margins of the outer window are ``lag``.
    """
    flags = np.full((result.n, result.p), TYPICAL, dtype=object)
    for c in result.collective:
        for r in c.components:
            flags[c.start : c.end + 1, r.variate] = LAG
            flags[c.start + r.start_lag : c.end - r.end_lag + 1, r.variate] = COLLECTIVE
    for a in result.points:
        flags[a.location, a.variate] = POINT
    return flags


def normalise_columns(values: np.ndarray) -> np.ndarray:
    """Rescale each column to [0, 1] (constant columns map to 0)."""
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(axis=0), v.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (v - lo) / span


def _names(p, names):
    return list(names) if names else [f"x{j + 1}" for j in range(p)]


def write_flagged_csv(path, values, flags: np.ndarray, names=None) -> None:
    """One row per time point: ``t``, then ``value_<name>`` and ``flag_<name>`` per variate.

    Values are rescaled to [0, 1] per variate.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    norm = normalise_columns(values)
    names = _names(values.shape[1], names)
    header = ["t"]
    for nm in names:
        header += [f"value_{nm}", f"flag_{nm}"]

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(values.shape[0]):
            row = [t + 1]
            for j in range(values.shape[1]):
                row += [repr(float(norm[t, j])), flags[t, j]]
            w.writerow(row)

    atomic_write(path, write, newline="")


def write_marginals_csv(path, marginal_prob, threshold: float) -> None:
    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "marginal_prob", "threshold"])
        for t, m in enumerate(np.asarray(marginal_prob, dtype=float)):
            w.writerow([t + 1, repr(float(m)), repr(float(threshold))])

    atomic_write(path, write, newline="")


def write_svg(path, values, flags=None, names=None, width: int = 900, row_height: int = 40) -> None:
    """Small-multiples line plot; flagged observations are overdrawn in colour."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n, p = values.shape
    shown = min(p, SVG_MAX_VARIATES)
    norm = normalise_columns(values[:, :shown])
    names = _names(p, names)
    margin = 60
    height = shown * row_height + 20
    dx = (width - margin - 10) / max(n - 1, 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for j in range(shown):
        top = 10 + j * row_height
        ys = top + (row_height - 8) * (1.0 - norm[:, j])
        xs = margin + dx * np.arange(n)
        pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(xs, ys))
        parts.append(f'<text x="4" y="{top + row_height / 2:.0f}" font-size="10">{escape(names[j])}</text>')
        parts.append(f'<polyline fill="none" stroke="#777" stroke-width="0.6" points="{pts}"/>')
        if flags is not None:
            for t in range(n):
                colour = _COLOURS.get(flags[t, j])
                if colour:
                    parts.append(
                        f'<circle cx="{xs[t]:.1f}" cy="{ys[t]:.1f}" r="1.4" fill="{colour}"/>'
                    )
    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    atomic_write(path, lambda fh: fh.write(text))


def series_flags_from_segments(n: int, p: int, segments) -> np.ndarray:
    """Flags for methods reporting only time segments (PASS, BARD): all variates."""
    flags = np.full((n, p), TYPICAL, dtype=object)
    for s, e in segments:
        flags[s : e + 1, :] = COLLECTIVE
    return flags


def emit_plot_data(prefix, values, result=None, names=None, segments=None, marginals=None) -> list[str]:
    """Write ``<prefix>.csv``, ``<prefix>.svg`` and, for BARD, ``<prefix>_marginal.csv``.

    ``result`` is an AnomalySet; ``segments`` (0-based inclusive pairs) is
    used instead for segment-only methods. ``marginals`` is
    ``(marginal_prob, threshold)``.
    """
    prefix = str(prefix)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n, p = values.shape
    if result is None:
        flags = series_flags_from_segments(n, p, segments or ())
    else:
        flags = flag_matrix(result)
    written = [prefix + ".csv", prefix + ".svg"]
    write_flagged_csv(written[0], values, flags, names)
    write_svg(written[1], values, flags, names)
    if marginals is not None:
        written.append(prefix + "_marginal.csv")
        write_marginals_csv(written[-1], *marginals)
    return written
