"""Report rendering: accuracy and scalability tables, plot-ready CSVs
and self-contained SVG scatter charts (no plotting dependency).

Output is byte-stable for identical inputs: rows are sorted and floats
formatted with fixed precision.
"""

from __future__ import annotations

import math
from pathlib import Path

from .bench import BENCH_CSV_HEADER

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 160, 40, 50


def accuracy_table(reports, k: int = 10) -> str:
    """Markdown table: Model | Precision@K | Recall@K | NDCG@K."""
    if not reports:
        raise ValueError("no reports to render")
    lines = [
        f"| Model | Precision@{k} | Recall@{k} | NDCG@{k} |",
        "| --- | --- | --- | --- |",
    ]
    for r in sorted(reports, key=lambda r: r.model):
        lines.append(
            f"| {r.model} | {r.value('precision', k):.4f} "
            f"| {r.value('recall', k):.4f} | {r.value('ndcg', k):.4f} |"
        )
    return "\n".join(lines) + "\n"


def scalability_table(records) -> str:
    """Markdown table: Model | Training Time (s) | Peak Memory (MB)."""
    if not records:
        raise ValueError("no records to render")
    lines = [
        "| Model | Training Time (s) | Peak Memory (MB) |",
        "| --- | --- | --- |",
    ]
    for rec in sorted(records, key=lambda r: (r.model, r.size)):
        if rec.fit_seconds is None:
            continue
        mb = (rec.peak_rss_bytes or 0) / 1e6
        lines.append(f"| {rec.model} | {rec.fit_seconds:.3f} | {mb:.1f} |")
    return "\n".join(lines) + "\n"


def xy_csv(points) -> str:
    """Plot-ready "x,y,series" rows, sorted by (series, x)."""
    lines = ["x,y,series"]
    for x, y, series in sorted(points, key=lambda p: (p[2], p[0])):
        lines.append(f"{x:.10g},{y:.10g},{series}")
    return "\n".join(lines) + "\n"


def group_map_points(reports_with_groups) -> list:
    """(group index, MAP, model) triples; missing groups are skipped."""
    points = []
    for r in reports_with_groups:
        if not r.group_map:
            continue
        for g, v in enumerate(r.group_map):
            if v is not None:
                points.append((float(g), float(v), r.model))
    return points


def latency_points(records) -> list:
    """(slot, latency ms/1k users, model) triples for the latency chart."""
    recs = sorted((r for r in records if r.latency_ms_per_1k), key=lambda r: r.model)
    return [(float(i), float(r.latency_ms_per_1k), r.model) for i, r in enumerate(recs)]


def _log_ticks(lo: float, hi: float) -> list:
    lo_exp = math.floor(math.log10(lo))
    hi_exp = math.ceil(math.log10(hi))
    return [10.0**e for e in range(lo_exp, hi_exp + 1)]


def _lin_ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / n
    return [lo + i * step for i in range(n + 1)]


def svg_scatter(points, *, title: str, x_label: str, y_label: str, log_y: bool = False) -> str:
    """Minimal standalone scatter chart; log-scaled charts place y ticks
    at powers of ten."""
    if not points:
        raise ValueError("no points to plot")
    series = sorted({p[2] for p in points})
    colors = {s: PALETTE[i % len(PALETTE)] for i, s in enumerate(series)}
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if log_y:
        positive = [y for y in ys if y > 0]
        if not positive:
            raise ValueError("log-scale chart needs positive values")
        y_ticks = _log_ticks(min(positive), max(positive))
        y_lo, y_hi = math.log10(y_ticks[0]), math.log10(y_ticks[-1])

        def y_pos(v):
            return math.log10(max(v, y_ticks[0]))
    else:
        y_ticks = _lin_ticks(0.0, max(ys))
        y_lo, y_hi = y_ticks[0], y_ticks[-1]

        def y_pos(v):
            return v

    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB

    def sx(x):
        return _ML + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return _MT + plot_h - (y_pos(y) - y_lo) / (y_hi - y_lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_ML}" y="20" font-size="14">{title}</text>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_MT + plot_h}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT + plot_h}" x2="{_ML + plot_w}" y2="{_MT + plot_h}" '
        'stroke="black"/>',
        f'<text x="{_ML + plot_w / 2:.1f}" y="{_H - 12}" text-anchor="middle">{x_label}</text>',
        f'<text x="16" y="{_MT + plot_h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_MT + plot_h / 2:.1f})">{y_label}</text>',
    ]
    for t in y_ticks:
        y = sy(t)
        label = f"{t:g}"
        out.append(f'<line x1="{_ML - 4}" y1="{y:.1f}" x2="{_ML}" y2="{y:.1f}" stroke="black"/>')
        out.append(
            f'<line x1="{_ML}" y1="{y:.1f}" x2="{_ML + plot_w}" y2="{y:.1f}" '
            'stroke="#dddddd"/>'
        )
        out.append(f'<text x="{_ML - 8}" y="{y + 4:.1f}" text-anchor="end">{label}</text>')
    for t in _lin_ticks(x_lo, x_hi, 5):
        x = sx(t)
        out.append(
            f'<line x1="{x:.1f}" y1="{_MT + plot_h}" x2="{x:.1f}" y2="{_MT + plot_h + 4}" '
            'stroke="black"/>'
        )
        out.append(
            f'<text x="{x:.1f}" y="{_MT + plot_h + 16}" text-anchor="middle">{t:g}</text>'
        )
    for x, y, s in sorted(points, key=lambda p: (p[2], p[0])):
        out.append(
            f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="4" fill="{colors[s]}" '
            'fill-opacity="0.85"/>'
        )
    for i, s in enumerate(series):
        ly = _MT + 14 * i
        lx = _ML + plot_w + 12
        out.append(f'<circle cx="{lx}" cy="{ly - 4}" r="4" fill="{colors[s]}"/>')
        out.append(f'<text x="{lx + 8}" y="{ly}">{s}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_report_files(
    outdir,
    reports,
    records,
    fmt: str = "markdown",
    k: int = 10,
) -> list:
    """Emit the table(s) in the requested format plus the plot CSV/SVG
    pair for latency and per-group MAP; returns written paths."""
    if not reports and not records:
        raise ValueError("nothing to report")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name, text):
        path = outdir / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    if fmt == "markdown":
        if reports:
            emit("accuracy.md", accuracy_table(reports, k))
        if records and any(r.fit_seconds is not None for r in records):
            emit("scalability.md", scalability_table(records))
    elif fmt == "csv":
        if reports:
            rows = []
            for r in sorted(reports, key=lambda r: r.model):
                rows.extend(r.csv_rows())
            emit("metrics.csv", "model,seed,metric,k,value\n" + "\n".join(rows) + "\n")
        if records:
            rows = [rec.csv_row() for rec in sorted(records, key=lambda r: (r.model, r.size))]
            emit("bench.csv", BENCH_CSV_HEADER + "\n" + "\n".join(rows) + "\n")
    elif fmt == "structured":
        body = "{\n" + ",\n".join(
            f'"{r.model}": ' + r.to_json() for r in sorted(reports, key=lambda r: r.model)
        ) + "\n}\n"
        emit("report.json", body)
    else:
        raise ValueError(f"unknown report format {fmt!r}")

    gpoints = group_map_points(reports)
    if gpoints:
        emit("group_map.csv", xy_csv(gpoints))
        emit("group_map.svg", svg_scatter(
            gpoints, title=f"MAP@{k} by user group", x_label="User Group", y_label="MAP",
        ))
    lpoints = latency_points(records)
    if lpoints:
        emit("latency.csv", xy_csv(lpoints))
        emit("latency.svg", svg_scatter(
            lpoints, title="Latency per 1,000 users", x_label="Model",
            y_label="ms per 1k users", log_y=True,
        ))
    return written
