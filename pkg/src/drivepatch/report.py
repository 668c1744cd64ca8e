"""Comparison tables and the distance/ASR chart.

The chart is a hand-built static SVG (one polyline per run over the distance
bins, critical 10-25 m band shaded) so report bytes are deterministic and
hash-stable.
"""
from __future__ import annotations

import csv
import io

from .metrics import MetricsReport

_TABLE_FIELDS = (
    "asr_overall",
    "baseline_rate",
    "persistence_mean",
    "detection_rate_benign",
    "detection_rate_adv",
    "detection_degradation_pp",
    "p_value",
)

_SERIES_COLORS = ("#c0392b", "#2471a3", "#1e8449", "#9a7d0a", "#7d3c98", "#34495e")
CRITICAL_RANGE_M = (10.0, 25.0)


def tables_csv(reports: dict[str, MetricsReport]) -> str:
    """One row per run label, metric columns in a fixed order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["run", "scenario"] + list(_TABLE_FIELDS))
    for label in sorted(reports):
        report = reports[label]
        row = [label, report.scenario_name]
        for fname in _TABLE_FIELDS:
            value = getattr(report, fname)
            row.append("" if value is None else repr(round(value, 6)))
        writer.writerow(row)
    return buf.getvalue()


def _bin_center(key: str) -> float:
    lo, hi = key.removesuffix("m").split("-")
    return (float(lo) + float(hi)) / 2.0


def asr_distance_svg(series: dict[str, dict[str, float]], width: int = 640, height: int = 400) -> str:
    """Line chart of ASR (%) vs distance bin center, one series per run."""
    margin = 56
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin
    xs_all = [
        _bin_center(k) for per_run in series.values() for k in per_run
    ] or [0.0, 1.0]
    x_min, x_max = 0.0, max(xs_all) * 1.1 + 1e-9

    def sx(x: float) -> float:
        return margin + (x - x_min) / (x_max - x_min) * plot_w

    def sy(y: float) -> float:
        return margin + (1.0 - y / 100.0) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    lo, hi = CRITICAL_RANGE_M
    if lo < x_max:
        parts.append(
            f'<rect x="{sx(lo):.1f}" y="{margin}" width="{sx(min(hi, x_max)) - sx(lo):.1f}" '
            f'height="{plot_h}" fill="#f5b7b1" fill-opacity="0.35"/>'
        )
    for frac in range(0, 101, 20):
        y = sy(frac)
        parts.append(
            f'<line x1="{margin}" y1="{y:.1f}" x2="{width - margin}" y2="{y:.1f}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{margin - 8}" y="{y + 4:.1f}" text-anchor="end" font-size="11">{frac}</text>'
        )
    parts.append(
        f'<rect x="{margin}" y="{margin}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333333"/>'
    )
    for i, (label, per_bin) in enumerate(sorted(series.items())):
        color = _SERIES_COLORS[i % len(_SERIES_COLORS)]
        points = sorted((_bin_center(k), v) for k, v in per_bin.items())
        path = " ".join(f"{sx(x):.1f},{sy(100.0 * v):.1f}" for x, v in points)
        if path:
            parts.append(
                f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>'
            )
        for x, v in points:
            parts.append(
                f'<circle cx="{sx(x):.1f}" cy="{sy(100.0 * v):.1f}" r="3" fill="{color}"/>'
            )
        ly = margin + 16 + 16 * i
        parts.append(
            f'<line x1="{width - margin - 120}" y1="{ly}" x2="{width - margin - 96}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{width - margin - 90}" y="{ly + 4}" font-size="11">{label}</text>'
        )
    parts.append(
        f'<text x="{width / 2:.0f}" y="{height - 14}" text-anchor="middle" font-size="12">'
        "Distance to patch (m)</text>"
    )
    parts.append(
        f'<text x="16" y="{height / 2:.0f}" font-size="12" '
        f'transform="rotate(-90 16 {height / 2:.0f})" text-anchor="middle">'
        "Attack success rate (%)</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
