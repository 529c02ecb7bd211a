"""Dependency-free SVG line charts of session series against elapsed time."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Optional, Sequence
from xml.sax.saxutils import escape

from ..errors import ValidationError
from ..model import SessionData, column_name, descriptor, parse_column
from .report import session_series

WIDTH, HEIGHT = 960, 480
LEFT, RIGHT, TOP, BOTTOM = 80, 200, 40, 60
PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def resolve_plot_columns(session: SessionData, metrics: Iterable[str]) -> list[str]:
    """Map metric ids (all devices) or explicit column names onto session columns."""
    have = [column_name(d, m) for d, m in session.columns]
    out: list[str] = []
    for tok in metrics:
        if tok in have:
            picked = [tok]
        else:
            picked = [c for c in have if parse_column(c)[1] == tok]
        if not picked:
            raise ValidationError(f"metric {tok!r} is not present in session {session.id}")
        out.extend(c for c in picked if c not in out)
    return out


def _segments(xs: Sequence[float], ys: Sequence[Optional[float]]) -> list[list[tuple[float, float]]]:
    segs, cur = [], []
    for x, y in zip(xs, ys):
        if y is None:
            if cur:
                segs.append(cur)
            cur = []
        else:
            cur.append((x, y))
    if cur:
        segs.append(cur)
    return segs


def _ticks(lo: float, hi: float, n: int) -> list[float]:
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def svg_chart(
    xs: Sequence[float],
    series: dict[str, Sequence[Optional[float]]],
    *,
    title: str,
    x_label: str,
    y_label: str,
) -> str:
    """Render named series as polylines; absent values break a line into segments."""
    present = [y for ys in series.values() for y in ys if y is not None]
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = (min(present), max(present)) if present else (0.0, 1.0)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.2f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<g class="axes" stroke="#333" stroke-width="1">'
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}"/>'
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}"/></g>',
    ]
    for v in _ticks(x0, x1, 6):
        out.append(f'<line x1="{px(v):.2f}" y1="{TOP + ph}" x2="{px(v):.2f}" y2="{TOP + ph + 5}" stroke="#333"/>')
        out.append(f'<text x="{px(v):.2f}" y="{TOP + ph + 18}" text-anchor="middle">{v:.6g}</text>')
    for v in _ticks(y0, y1, 5):
        out.append(f'<line x1="{LEFT - 5}" y1="{py(v):.2f}" x2="{LEFT}" y2="{py(v):.2f}" stroke="#333"/>')
        out.append(f'<line x1="{LEFT}" y1="{py(v):.2f}" x2="{LEFT + pw}" y2="{py(v):.2f}" stroke="#eee"/>')
        out.append(f'<text x="{LEFT - 8}" y="{py(v) + 4:.2f}" text-anchor="end">{v:.6g}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(x_label)}</text>')
    cy = TOP + ph / 2
    out.append(f'<text x="18" y="{cy:.2f}" text-anchor="middle" transform="rotate(-90 18 {cy:.2f})">'
               f'{escape(y_label)}</text>')

    for i, (name, ys) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<g class="series" data-name="{escape(name)}" stroke="{color}" fill="none" stroke-width="1.5">')
        for seg in _segments(xs, ys):
            if len(seg) == 1:
                (x, y), = seg
                out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="1.5" fill="{color}"/>')
            else:
                pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in seg)
                out.append(f'<polyline points="{pts}"/>')
        out.append("</g>")
        ly = TOP + 10 + i * 18
        out.append(f'<line x1="{WIDTH - RIGHT + 15}" y1="{ly}" x2="{WIDTH - RIGHT + 35}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{WIDTH - RIGHT + 40}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_plot(session: SessionData, metrics: Iterable[str], output_path: str | Path) -> Path:
    """Write one SVG with a polyline per requested series against elapsed seconds."""
    cols = resolve_plot_columns(session, list(metrics))
    all_series = session_series(session)
    units, names = [], {}
    multi = len(session.gpus) > 1
    for c in cols:
        dev, mid = parse_column(c)
        desc = descriptor(mid)
        if desc.report_unit not in units:
            units.append(desc.report_unit)
        prefix = f"GPU {dev.index} " if dev.cls == "gpu" and multi else ""
        names[c] = prefix + desc.report_name
    series = {names[c]: all_series[c] for c in cols}
    svg = svg_chart(
        session.times(), series,
        title=", ".join(names[c] for c in cols) if len(cols) <= 3 else f"{len(cols)} metrics",
        x_label="Elapsed time [s]",
        y_label="Value [" + ", ".join(units) + "]",
    )
    path = Path(output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg, encoding="utf-8")
    return path
