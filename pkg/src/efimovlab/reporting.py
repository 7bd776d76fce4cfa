"""Machine-readable outputs: JSON reports, CSV tables and static SVG plots."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError(f"non-finite value {x} cannot be written to a report")
        return x
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(report: dict, path) -> Path:
    path = Path(path)
    text = dumps_report(report)
    path.write_text(text, encoding="utf-8")
    return path


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def emit_csv(header: Sequence[str], rows: Sequence[Sequence], path) -> Path:
    """Write ``rows`` under ``header``; floats with 17 significant digits.

    Refuses an empty table without touching the file system.
    """
    if not rows:
        raise ValueError("refusing to write an empty table")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for r in rows:
        if len(r) != len(header):
            raise ValueError(f"row has {len(r)} cells, header has {len(header)}")
        writer.writerow([_cell(v) for v in r])
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return path


def _fmt(v: float) -> str:
    return format(v, ".6g")


def emit_svg(
    series: Sequence[tuple[str, Sequence[float]]],
    hline: float,
    path,
    *,
    xlabel: str = "",
    ylabel: str = "eigenvalue",
    title: str = "",
    width: int = 640,
    height: int = 420,
    ylim: Optional[tuple[float, float]] = None,
) -> Path:
    """Eigenvalue dots per column with a dashed horizontal line at ``hline``.

    ``series`` holds one ``(label, values)`` pair per column.
    """
    if not series:
        raise ValueError("nothing to plot")
    values = [v for _, vals in series for v in vals]
    lo, hi = ylim if ylim else (min(values + [hline]), max(values + [hline]))
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.08 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    left, right, top, bottom = 80, 20, 40, 60
    pw, ph = width - left - right, height - top - bottom
    ncol = len(series)

    def sx(i: int) -> float:
        return left + pw * (i + 0.5) / ncol

    def sy(v: float) -> float:
        return top + ph * (hi - v) / (hi - lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2}" y="24" text-anchor="middle" font-size="15">{_esc(title)}</text>')
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        y = sy(v)
        out.append(f'<line x1="{left - 5}" y1="{_fmt(y)}" x2="{left}" y2="{_fmt(y)}" stroke="black"/>')
        out.append(
            f'<text x="{left - 8}" y="{_fmt(y + 4)}" text-anchor="end" font-size="11">{_fmt(v)}</text>'
        )
    for i, (label, vals) in enumerate(series):
        x = sx(i)
        out.append(
            f'<text x="{_fmt(x)}" y="{top + ph + 18}" text-anchor="middle" font-size="11">{_esc(label)}</text>'
        )
        for v in vals:
            out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(sy(v))}" r="3" fill="steelblue"/>')
    yl = sy(hline)
    out.append(
        f'<line x1="{left}" y1="{_fmt(yl)}" x2="{left + pw}" y2="{_fmt(yl)}" '
        f'stroke="firebrick" stroke-dasharray="6,4"/>'
    )
    out.append(
        f'<text x="{left + pw - 4}" y="{_fmt(yl - 5)}" text-anchor="end" font-size="11" '
        f'fill="firebrick">edge {_fmt(hline)}</text>'
    )
    out.append(f'<text x="{left + pw / 2}" y="{height - 14}" text-anchor="middle" font-size="13">{_esc(xlabel)}</text>')
    out.append(
        f'<text x="18" y="{top + ph / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {top + ph / 2})">{_esc(ylabel)}</text>'
    )
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
