"""Report emission: JSON, long-format CSV and a static log-log SVG.

All three writers are deterministic for a fixed report: JSON keys are sorted,
floats are written with ``repr`` and the SVG uses fixed-precision coordinates.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .experiments import Report

FORMATS = ("json", "csv", "svg")
CSV_HEADER = ("scenario", "h", "metric", "value", "tolerance", "status")
SVG_SERIES = (("energy_error", "|F_h(w_h) - min E|", "#1f77b4"),
              ("sqrt_h_grad_l2", "||sqrt(h) grad w_h||", "#d62728"))


def to_jsonable(obj):
    """Replace non-finite floats by strings so the output is strict JSON."""
    if isinstance(obj, float):
        if math.isfinite(obj):
            return obj
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):  # numpy scalars
        return to_jsonable(obj.item())
    return obj


def report_json(r: Report) -> str:
    return json.dumps(to_jsonable(r.to_dict()), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def report_csv(r: Report) -> str:
    """One row per (h, metric)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    name = r.scenario.get("name", r.demo)
    for step in r.steps:
        for metric in sorted(step["metrics"]):
            w.writerow([name, _fmt(step["h"]), metric, _fmt(step["metrics"][metric]),
                        _fmt(r.metric_tolerances.get(metric)), step["status"]])
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    for row in rows:
        row["h"] = float(row["h"])
        row["value"] = float(row["value"])
        row["tolerance"] = float(row["tolerance"]) if row["tolerance"] else None
    return rows


def report_svg(r: Report, width: int = 640, height: int = 440) -> str:
    """Log-log plot of the two convergence curves against h."""
    left, right, top, bottom = 80, 190, 40, 60
    pw, ph = width - left - right, height - top - bottom
    series = []
    for key, label, color in SVG_SERIES:
        pts = [(s["h"], s["metrics"][key]) for s in r.steps
               if key in s["metrics"] and s["h"] > 0 and _positive(s["metrics"][key])]
        if pts:
            series.append((label, color, pts))
    title = f"{r.scenario.get('name', r.demo)}: convergence in h"
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.2f}" y="22" text-anchor="middle" font-family="sans-serif" '
           f'font-size="14">{_escape(title)}</text>']
    if not series:
        out.append(f'<text x="{width / 2:.2f}" y="{height / 2:.2f}" text-anchor="middle" '
                   'font-family="sans-serif" font-size="12">no convergence data</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"
    xs = [math.log10(x) for _, _, pts in series for x, _ in pts]
    ys = [math.log10(y) for _, _, pts in series for _, y in pts]
    x0, x1 = math.floor(min(xs)), math.ceil(max(xs))
    y0, y1 = math.floor(min(ys)), math.ceil(max(ys))
    x1 = max(x1, x0 + 1)
    y1 = max(y1, y0 + 1)

    def px(lx):
        return left + (lx - x0) / (x1 - x0) * pw

    def py(ly):
        return top + (y1 - ly) / (y1 - y0) * ph

    out.append(f'<path d="M{left:.2f},{top:.2f} V{top + ph:.2f} H{left + pw:.2f}" stroke="black" fill="none"/>')
    for k in range(x0, x1 + 1):
        X = px(k)
        out.append(f'<path d="M{X:.2f},{top + ph:.2f} v5" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{top + ph + 20:.2f}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">1e{k}</text>')
    for k in range(y0, y1 + 1):
        Y = py(k)
        out.append(f'<path d="M{left - 5:.2f},{Y:.2f} h5" stroke="black"/>')
        out.append(f'<text x="{left - 8:.2f}" y="{Y + 4:.2f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">1e{k}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 15:.2f}" text-anchor="middle" '
               'font-family="sans-serif" font-size="12">h</text>')
    for i, (label, color, pts) in enumerate(series):
        d = " ".join(f"{'M' if j == 0 else 'L'}{px(math.log10(x)):.2f},{py(math.log10(y)):.2f}"
                     for j, (x, y) in enumerate(pts))
        out.append(f'<path d="{d}" stroke="{color}" stroke-width="2" fill="none"/>')
        for x, y in pts:
            cx, cy = px(math.log10(x)), py(math.log10(y))
            out.append(f'<path d="M{cx - 3:.2f},{cy:.2f} h6 M{cx:.2f},{cy - 3:.2f} v6" stroke="{color}"/>')
        ly = top + 20 + 20 * i
        out.append(f'<path d="M{left + pw + 15:.2f},{ly:.2f} h20" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 40:.2f}" y="{ly + 4:.2f}" font-family="sans-serif" '
                   f'font-size="11">{_escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _positive(v) -> bool:
    return isinstance(v, (int, float)) and math.isfinite(v) and v > 0


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


_WRITERS = {"json": report_json, "csv": report_csv, "svg": report_svg}


def emit_report(r: Report, out_dir, formats=FORMATS) -> list[Path]:
    """Write ``<name>.<fmt>`` for each requested format; returns the paths."""
    bad = sorted(set(formats) - set(FORMATS))
    if bad:
        raise ValueError(f"unknown report formats {bad}; choose from {FORMATS}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    stem = str(r.scenario.get("name", r.demo))
    paths = []
    for fmt in FORMATS:
        if fmt in formats:
            path = out / f"{stem}.{fmt}"
            path.write_text(_WRITERS[fmt](r))
            paths.append(path)
    return paths
