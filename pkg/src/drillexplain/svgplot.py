"""Self-contained SVG rendering for reports.

Explanation panels draw one row per telemetry channel plus a probability
track: yellow areas mark model-highlighted spans, red areas mark expert
reference regions, and a dashed line marks the alarm threshold.  Embedding
scatters color points by group (pink highlighted, purple codebook, yellow
expert).  Everything is emitted as plain SVG strings with fixed geometry,
so reports need no plotting dependency.
"""

from __future__ import annotations

import html
from dataclasses import dataclass

import numpy as np

from .telemetry import MNEMONICS

CANVAS_W = 960
LABEL_W = 70
GUTTER = 12
ROW_H = 46
ROW_GAP = 6
PROB_H = 70

COLORS = {
    "trace": "#1f3552",
    "highlight": "#ffe066",
    "reference": "#d64545",
    "probability": "#1f77b4",
    "threshold": "#d64545",
    "frame": "#c7ccd4",
    "text": "#30343a",
}

EMBED_COLORS = {
    "highlighted": "#f06eaa",
    "codebook": "#7d5ba6",
    "expert": "#e8c547",
}


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _polyline(xs: np.ndarray, ys: np.ndarray, color: str, width: float = 1.0) -> str:
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))
    return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"/>')


def _rect(x: float, y: float, w: float, h: float, fill: str,
          opacity: float = 1.0, extra: str = "") -> str:
    return (f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" '
            f'height="{_fmt(h)}" fill="{fill}" opacity="{opacity}"{extra}/>')


def _text(x: float, y: float, s: str, size: int = 11,
          anchor: str = "start") -> str:
    return (f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'font-family="sans-serif" fill="{COLORS["text"]}" '
            f'text-anchor="{anchor}">{html.escape(s)}</text>')


@dataclass
class _Axis:
    t0: float
    t1: float
    x0: float = LABEL_W + GUTTER
    width: float = CANVAS_W - LABEL_W - 2 * GUTTER

    def x(self, t):
        span = max(self.t1 - self.t0, 1e-9)
        return self.x0 + (np.asarray(t, dtype=np.float64) - self.t0) / span * self.width


def _row(parts: list[str], axis: _Axis, y: float, name: str,
         times: np.ndarray, values: np.ndarray,
         highlights: list[tuple[float, float]],
         references: list[tuple[float, float]]) -> None:
    parts.append(_rect(axis.x0, y, axis.width, ROW_H, "#ffffff", 1.0,
                       f' stroke="{COLORS["frame"]}"'))
    for a, b in references:
        xa, xb = float(axis.x(a)), float(axis.x(b))
        parts.append(_rect(xa, y, max(xb - xa, 1.0), ROW_H,
                           COLORS["reference"], 0.18))
    for a, b in highlights:
        xa, xb = float(axis.x(a)), float(axis.x(b))
        parts.append(_rect(xa, y, max(xb - xa, 1.0), ROW_H,
                           COLORS["highlight"], 0.55))
    lo, hi = float(np.min(values)), float(np.max(values))
    span = max(hi - lo, 1e-9)
    ys = y + ROW_H - 4 - (values - lo) / span * (ROW_H - 8)
    parts.append(_polyline(axis.x(times), ys, COLORS["trace"]))
    parts.append(_text(LABEL_W, y + ROW_H / 2 + 4, name, anchor="end"))


def explanation_figure(
    times: np.ndarray,
    channels: dict[str, np.ndarray],
    highlights: dict[str, list[tuple[float, float]]],
    references: dict[str, list[tuple[float, float]]],
    prob_times: np.ndarray,
    probs: np.ndarray,
    threshold: float,
    title: str = "",
) -> str:
    """One accident case: channel rows with highlight/reference areas
    plus the probability track underneath."""
    times = np.asarray(times, dtype=np.float64)
    axis = _Axis(float(times[0]), float(times[-1]))
    names = [m for m in MNEMONICS if m in channels]
    height = 30 + len(names) * (ROW_H + ROW_GAP) + PROB_H + 30
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS_W}" '
             f'height="{height}" viewBox="0 0 {CANVAS_W} {height}">']
    parts.append(_rect(0, 0, CANVAS_W, height, "#fbfbfc"))
    if title:
        parts.append(_text(axis.x0, 18, title, size=13))

    y = 30.0
    for name in names:
        _row(parts, axis, y, name, times, np.asarray(channels[name]),
             highlights.get(name, []), references.get(name, []))
        y += ROW_H + ROW_GAP

    prob_times = np.asarray(prob_times, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    parts.append(_rect(axis.x0, y, axis.width, PROB_H, "#ffffff", 1.0,
                       f' stroke="{COLORS["frame"]}"'))
    keep = (prob_times >= axis.t0) & (prob_times <= axis.t1)
    if keep.any():
        ys = y + PROB_H - 4 - probs[keep] * (PROB_H - 8)
        parts.append(_polyline(axis.x(prob_times[keep]), ys,
                               COLORS["probability"], 1.4))
    ty = y + PROB_H - 4 - threshold * (PROB_H - 8)
    parts.append(f'<line x1="{_fmt(axis.x0)}" y1="{_fmt(ty)}" '
                 f'x2="{_fmt(axis.x0 + axis.width)}" y2="{_fmt(ty)}" '
                 f'stroke="{COLORS["threshold"]}" stroke-dasharray="6,4"/>')
    parts.append(_text(LABEL_W, y + PROB_H / 2 + 4, "prob", anchor="end"))
    parts.append("</svg>")
    return "".join(parts)


def embedding_figure(points: np.ndarray, groups: list[str],
                     title: str = "", size: int = 440) -> str:
    """2-D scatter colored by group tag."""
    pts = np.asarray(points, dtype=np.float64)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    margin = 34
    inner = size - 2 * margin
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
             f'height="{size}" viewBox="0 0 {size} {size}">',
             _rect(0, 0, size, size, "#fbfbfc"),
             _rect(margin, margin, inner, inner, "#ffffff", 1.0,
                   f' stroke="{COLORS["frame"]}"')]
    if title:
        parts.append(_text(margin, 20, title, size=13))
    order = sorted(range(len(pts)),
                   key=lambda i: groups[i] != "codebook")  # highlights on top
    for i in order:
        x = margin + (pts[i, 0] - lo[0]) / span[0] * inner
        y = margin + inner - (pts[i, 1] - lo[1]) / span[1] * inner
        color = EMBED_COLORS.get(groups[i], "#9aa1ab")
        parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="2.6" '
                     f'fill="{color}" fill-opacity="0.8"/>')
    x = margin
    for tag in ("highlighted", "codebook", "expert"):
        if tag in groups:
            parts.append(f'<circle cx="{_fmt(x + 5)}" cy="{size - 12}" r="4" '
                         f'fill="{EMBED_COLORS[tag]}"/>')
            parts.append(_text(x + 14, size - 8, tag))
            x += 110
    parts.append("</svg>")
    return "".join(parts)


def methods_table_html(metrics: dict) -> str:
    """Explanation precision/recall per method, strict and extended."""
    head = ("<tr><th>method</th><th>strict precision</th><th>strict recall"
            "</th><th>extended precision</th><th>extended recall</th></tr>")
    rows = [head]
    for method, section in metrics["explanations"]["methods"].items():
        s = section["micro"]["strict"]
        e = section["micro"]["extended"]
        rows.append(
            f"<tr><td>{html.escape(method)}</td>"
            f"<td>{s['precision']:.4f}</td><td>{s['recall']:.4f}</td>"
            f"<td>{e['precision']:.4f}</td><td>{e['recall']:.4f}</td></tr>")
    return f'<table border="1" cellspacing="0" cellpadding="4">{"".join(rows)}</table>'


def alarms_table_html(metrics: dict) -> str:
    head = ("<tr><th>type</th><th>threshold</th><th>covered</th>"
            "<th>false alarms/day</th></tr>")
    rows = [head]
    for kind, a in metrics["alarms"].items():
        rows.append(
            f"<tr><td>{html.escape(kind)}</td><td>{a['threshold']:.4f}</td>"
            f"<td>{a['n_covered']}/{a['n_events']}</td>"
            f"<td>{a['false_alarms_per_day']:.2f}</td></tr>")
    return f'<table border="1" cellspacing="0" cellpadding="4">{"".join(rows)}</table>'


def html_report(title: str, sections: list[tuple[str, str]]) -> str:
    """Single HTML document embedding prebuilt SVG/table fragments."""
    parts = ["<!DOCTYPE html>", "<html><head>",
             f"<title>{html.escape(title)}</title>",
             "<meta charset='utf-8'>",
             "<style>body{font-family:sans-serif;margin:24px;}"
             "h2{margin-top:32px;}</style>",
             "</head><body>", f"<h1>{html.escape(title)}</h1>"]
    for heading, body in sections:
        parts.append(f"<h2>{html.escape(heading)}</h2>")
        parts.append(body)
    parts.append("</body></html>")
    return "\n".join(parts) + "\n"
