"""Bare-bones SVG output: a line plot with error bars and a cell heatmap."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

W, H, PAD = 480, 320, 48


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _doc(body: list[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">'
    )
    return "\n".join(
        [head, f'<text x="{W / 2}" y="18" text-anchor="middle">{escape(title)}</text>', *body, "</svg>", ""]
    )


def line_plot(x, y, err=None, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    e = np.zeros_like(y) if err is None else np.asarray(err, dtype=float)
    lo, hi = float(np.min(y - e)), float(np.max(y + e))
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    x0, x1 = float(x.min()), float(x.max()) if x.max() > x.min() else float(x.min()) + 1.0

    def px(v):
        return PAD + (v - x0) / (x1 - x0) * (W - 2 * PAD)

    def py(v):
        return H - PAD - (v - lo) / (hi - lo) * (H - 2 * PAD)

    pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(x, y))
    body = [
        f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" fill="none" stroke="#999"/>',
        f'<polyline points="{pts}" fill="none" stroke="#1f5fa8" stroke-width="1.5"/>',
    ]
    for a, b, d in zip(x, y, e):
        if d > 0:
            body.append(
                f'<line x1="{_fmt(px(a))}" y1="{_fmt(py(b - d))}" x2="{_fmt(px(a))}" '
                f'y2="{_fmt(py(b + d))}" stroke="#1f5fa8"/>'
            )
    body += [
        f'<text x="{PAD - 4}" y="{PAD + 4}" text-anchor="end">{_fmt(hi)}</text>',
        f'<text x="{PAD - 4}" y="{H - PAD}" text-anchor="end">{_fmt(lo)}</text>',
        f'<text x="{PAD}" y="{H - PAD + 14}">{_fmt(x0)}</text>',
        f'<text x="{W - PAD}" y="{H - PAD + 14}" text-anchor="end">{_fmt(x1)}</text>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{H / 2}" transform="rotate(-90 14 {H / 2})" text-anchor="middle">{escape(ylabel)}</text>',
    ]
    return _doc(body, title)


def _diverging(t: float) -> str:
    """t in [-1, 1] -> red (negative) through white to blue (positive)."""
    t = max(-1.0, min(1.0, t))
    if t >= 0:
        r, g, b = 255 * (1 - t), 255 * (1 - 0.6 * t), 255
    else:
        r, g, b = 255, 255 * (1 + 0.6 * t), 255 * (1 + t)
    return f"#{int(r):02x}{int(g):02x}{int(b):02x}"


def heatmap(rows, cols, values, title: str = "", row_label: str = "", col_label: str = "") -> str:
    """Cells colored by sign and size of ``values[i, j]``; blue means positive."""
    v = np.asarray(values, dtype=float)
    scale = float(np.nanmax(np.abs(v))) if np.any(np.isfinite(v)) else 1.0
    scale = scale or 1.0
    cw = (W - 2 * PAD) / max(1, len(cols))
    ch = (H - 2 * PAD) / max(1, len(rows))
    body = []
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            val = v[i, j]
            fill = "#cccccc" if not np.isfinite(val) else _diverging(val / scale)
            x, y = PAD + j * cw, PAD + i * ch
            body.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(cw)}" height="{_fmt(ch)}" '
                f'fill="{fill}" stroke="#fff"><title>{escape(f"{r}, {c}: {val:.4g}")}</title></rect>'
            )
            body.append(
                f'<text x="{_fmt(x + cw / 2)}" y="{_fmt(y + ch / 2 + 4)}" text-anchor="middle" '
                f'font-size="9">{val:.3g}</text>'
            )
        body.append(f'<text x="{PAD - 4}" y="{_fmt(PAD + (i + 0.5) * ch + 4)}" text-anchor="end">{r}</text>')
    for j, c in enumerate(cols):
        body.append(f'<text x="{_fmt(PAD + (j + 0.5) * cw)}" y="{H - PAD + 14}" text-anchor="middle">{c}</text>')
    body += [
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle">{escape(col_label)}</text>',
        f'<text x="12" y="{H / 2}" transform="rotate(-90 12 {H / 2})" text-anchor="middle">{escape(row_label)}</text>',
    ]
    return _doc(body, title)
