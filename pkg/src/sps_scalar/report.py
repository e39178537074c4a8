"""CSV tables and dependency-free SVG plots of experiment summaries."""

from __future__ import annotations

import csv
import io
import math
from datetime import datetime, timezone
from xml.sax.saxutils import escape

from .montecarlo import ExperimentSummary

CSV_COLUMNS = ("n", "emp_exact", "emp_outer", "theo_exact", "theo_outer", "coverage", "k", "seed")


def _fmt(x) -> str:
    if isinstance(x, (bool,)):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _timestamp() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def summary_csv(summary: ExperimentSummary, deterministic: bool = False) -> str:
    buf = io.StringIO()
    if not deterministic:
        buf.write(f"# generated {_timestamp()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in summary.rows:
        writer.writerow([_fmt(getattr(row, col)) for col in CSV_COLUMNS])
    return buf.getvalue()


def read_summary_csv(text: str) -> list[dict[str, float]]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    return [{k: float(v) for k, v in rec.items()} for rec in reader]


# -- svg -------------------------------------------------------------------

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 50
COLORS = {"emp_exact": "#1f77b4", "theo_exact": "#1f77b4",
          "emp_outer": "#d62728", "theo_outer": "#d62728"}
LABELS = {"emp_exact": "empirical quantile (SPS region)",
          "theo_exact": "theoretical bound (SPS region)",
          "emp_outer": "empirical quantile (outer approx.)",
          "theo_outer": "theoretical bound (outer approx.)"}


def plotted_curves(summary: ExperimentSummary) -> list[str]:
    """Curve names drawn for ``summary``: one empirical/theoretical pair per target."""
    names = []
    for target in ("exact", "outer"):
        theo = [getattr(r, f"theo_{target}") for r in summary.rows]
        if any(math.isfinite(v) for v in theo):
            names += [f"emp_{target}", f"theo_{target}"]
    return names


def _points(summary, name):
    pts = []
    for row in summary.rows:
        v = getattr(row, name)
        if math.isfinite(v) and v > 0:
            pts.append((row.n, v))
    return pts


def summary_svg(summary: ExperimentSummary, title: str = "", deterministic: bool = False) -> str:
    """Log-scale plot of interval size against sample size."""
    names = plotted_curves(summary)
    curves = {name: _points(summary, name) for name in names}
    xs = [n for pts in curves.values() for n, _ in pts] or [r.n for r in summary.rows]
    ys = [v for pts in curves.values() for _, v in pts] or [1.0]
    x0, x1 = min(xs), max(xs)
    if x0 == x1:
        x0, x1 = x0 - 1, x1 + 1
    ly0 = math.floor(math.log10(min(ys)))
    ly1 = math.ceil(math.log10(max(ys)))
    if ly0 == ly1:
        ly1 += 1
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def sx(x):
        return MARGIN_L + (x - x0) / (x1 - x0) * pw

    def sy(v):
        return MARGIN_T + (ly1 - math.log10(v)) / (ly1 - ly0) * ph

    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    if not deterministic:
        out.append(f"<!-- generated {_timestamp()} -->")
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
               f'viewBox="0 0 {WIDTH} {HEIGHT}" data-curves="{len(names)}">')
    out.append(f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
               f'{escape(title)}</text>')
    out.append(f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" '
               'fill="none" stroke="#000"/>')
    for e in range(ly0, ly1 + 1):
        y = sy(10.0**e)
        out.append(f'<line x1="{MARGIN_L - 4}" y1="{y:.2f}" x2="{MARGIN_L}" y2="{y:.2f}" stroke="#000"/>')
        out.append(f'<text x="{MARGIN_L - 8}" y="{y + 4:.2f}" text-anchor="end" font-size="11">'
                   f'1e{e}</text>')
    for i in range(6):
        xv = x0 + (x1 - x0) * i / 5
        x = sx(xv)
        out.append(f'<line x1="{x:.2f}" y1="{MARGIN_T + ph}" x2="{x:.2f}" y2="{MARGIN_T + ph + 4}" stroke="#000"/>')
        out.append(f'<text x="{x:.2f}" y="{MARGIN_T + ph + 18}" text-anchor="middle" font-size="11">'
                   f'{xv:.0f}</text>')
    out.append(f'<text x="{MARGIN_L + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" '
               'font-size="12">sample size n</text>')
    for j, name in enumerate(names):
        pts = curves[name]
        dash = ' stroke-dasharray="6,4"' if name.startswith("theo") else ""
        data = ";".join(f"{n},{_fmt(v)}" for n, v in pts)
        out.append(f"<!-- data {name}: {data} -->")
        coords = " ".join(f"{sx(n):.2f},{sy(v):.2f}" for n, v in pts)
        out.append(f'<polyline class="curve" data-name="{name}" fill="none" '
                   f'stroke="{COLORS[name]}" stroke-width="1.5"{dash} points="{coords}"/>')
        ly = MARGIN_T + 14 + 16 * j
        out.append(f'<line x1="{MARGIN_L + pw - 230}" y1="{ly - 4}" x2="{MARGIN_L + pw - 205}" '
                   f'y2="{ly - 4}" stroke="{COLORS[name]}" stroke-width="1.5"{dash}/>')
        out.append(f'<text x="{MARGIN_L + pw - 200}" y="{ly}" font-size="11">'
                   f'{escape(LABELS[name])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
