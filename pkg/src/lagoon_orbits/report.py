"""Deterministic text output: structured reports, CSV tables and SVG plots."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


def fmt17(x: float) -> str:
    """Round-trippable decimal for machine-readable output."""
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return f"{x:.17g}"


def fmt6(x) -> str:
    """Six significant digits for human summaries."""
    if isinstance(x, (bool, np.bool_)) or x is None:
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, complex):
        return f"{x.real:.6g}{x.imag:+.6g}j"
    return f"{float(x):.6g}"


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt17(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return _encode([obj.real, obj.imag], indent, level)
    if isinstance(obj, str):
        return _quote(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [f"{pad}{_quote(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number, bool, str)) or v is None for v in obj):
            return "[" + ", ".join(_encode(v, indent, level) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _quote(s: str) -> str:
    out = s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    return f'"{out}"'


def dumps(obj, indent: int = 2) -> str:
    """JSON text with 17-significant-digit floats and stable key order.

    Key order is insertion order, so identical inputs give byte-identical
    output.  Non-finite floats are written as ``NaN``/``Infinity``, which
    ``json.loads`` accepts.
    """
    return _encode(obj, indent, 0) + "\n"


def write_report(path: str | Path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def write_csv(path: str | Path, header: Sequence[str], columns: Iterable[Sequence[float]]) -> Path:
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    if len(cols) != len(header) or len({c.size for c in cols}) > 1:
        raise ValueError("header and columns must agree in count and length")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([fmt17(v) for v in row])
    return path


# ---------------------------------------------------------------------------
# SVG

class SvgPlot:
    """Minimal SVG canvas mapping data coordinates onto a framed plot area."""

    def __init__(self, xlim, ylim, width: int = 720, height: int = 540, margin: int = 60,
                 xlabel: str = "", ylabel: str = "", title: str = ""):
        self.xlim = tuple(map(float, xlim))
        self.ylim = tuple(map(float, ylim))
        if not (self.xlim[1] > self.xlim[0] and self.ylim[1] > self.ylim[0]):
            # a single-point grid still gets a visible frame
            self.xlim = _widen(self.xlim)
            self.ylim = _widen(self.ylim)
        self.width, self.height, self.margin = width, height, margin
        self.parts: list[str] = []
        self.xlabel, self.ylabel, self.title = xlabel, ylabel, title

    def _px(self, x, y):
        (x0, x1), (y0, y1) = self.xlim, self.ylim
        m = self.margin
        px = m + (np.asarray(x, dtype=float) - x0) / (x1 - x0) * (self.width - 2 * m)
        py = self.height - m - (np.asarray(y, dtype=float) - y0) / (y1 - y0) * (self.height - 2 * m)
        return px, py

    def polyline(self, x, y, color: str = "black", width: float = 1.5, dash: str | None = None):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        (x0, x1), (y0, y1) = self.xlim, self.ylim
        ok &= (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        # one polyline per run of visible points
        runs = np.split(np.arange(x.size), np.flatnonzero(np.diff(ok.astype(int))) + 1)
        style = f' stroke-dasharray="{dash}"' if dash else ""
        for run in runs:
            if run.size < 2 or not ok[run[0]]:
                continue
            px, py = self._px(x[run], y[run])
            pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
            self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{style}/>')

    def rect(self, x0, x1, y0, y1, color: str = "red", width: float = 2.0):
        xs = [x0, x1, x1, x0, x0]
        ys = [y0, y0, y1, y1, y0]
        px, py = self._px(xs, ys)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def arrows(self, x, y, u, v, length: float = 14.0, color: str = "#1f4e9a"):
        """Unit arrows in screen space; ``(u, v)`` are data-space directions."""
        px, py = self._px(x, y)
        (x0, x1), (y0, y1) = self.xlim, self.ylim
        su = np.asarray(u, dtype=float) * (self.width - 2 * self.margin) / (x1 - x0)
        sv = -np.asarray(v, dtype=float) * (self.height - 2 * self.margin) / (y1 - y0)
        norm = np.hypot(su, sv)
        for a, b, du, dv, n in zip(px, py, su, sv, norm):
            if not (np.isfinite(n) and n > 0):
                self.parts.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="1.5" fill="{color}"/>')
                continue
            du, dv = du / n * length, dv / n * length
            tx, ty = a + du / 2, b + dv / 2
            sx, sy = a - du / 2, b - dv / 2
            # arrowhead: two short strokes at +-25 degrees
            hx, hy = -du * 0.35, -dv * 0.35
            c, s = math.cos(0.45), math.sin(0.45)
            h1 = (tx + c * hx - s * hy, ty + s * hx + c * hy)
            h2 = (tx + c * hx + s * hy, ty - s * hx + c * hy)
            self.parts.append(
                f'<path d="M{sx:.2f},{sy:.2f} L{tx:.2f},{ty:.2f} M{h1[0]:.2f},{h1[1]:.2f} '
                f'L{tx:.2f},{ty:.2f} L{h2[0]:.2f},{h2[1]:.2f}" stroke="{color}" fill="none" stroke-width="1.2"/>'
            )

    def legend(self, entries: Sequence[tuple[str, str]]):
        x = self.width - self.margin - 150
        self.parts.append(f'<rect x="{x - 6}" y="{self.margin + 2}" width="150" height="{16 * len(entries) + 6}" '
                          f'fill="white" fill-opacity="0.9" stroke="#999999"/>')
        for i, (label, color) in enumerate(entries):
            y = self.margin + 14 + 16 * i
            self.parts.append(f'<line x1="{x}" y1="{y - 4}" x2="{x + 20}" y2="{y - 4}" stroke="{color}" stroke-width="2"/>')
            self.parts.append(f'<text x="{x + 26}" y="{y}" font-size="12">{_escape(label)}</text>')

    def render(self) -> str:
        m, w, h = self.margin, self.width, self.height
        (x0, x1), (y0, y1) = self.xlim, self.ylim
        frame = [
            f'<rect x="{m}" y="{m}" width="{w - 2 * m}" height="{h - 2 * m}" fill="none" stroke="black"/>',
            f'<text x="{m}" y="{h - m + 18}" font-size="12">{fmt6(x0)}</text>',
            f'<text x="{w - m}" y="{h - m + 18}" font-size="12" text-anchor="end">{fmt6(x1)}</text>',
            f'<text x="{m - 6}" y="{h - m}" font-size="12" text-anchor="end">{fmt6(y0)}</text>',
            f'<text x="{m - 6}" y="{m + 10}" font-size="12" text-anchor="end">{fmt6(y1)}</text>',
            f'<text x="{w / 2}" y="{h - m + 36}" font-size="14" text-anchor="middle">{_escape(self.xlabel)}</text>',
            f'<text x="{m - 40}" y="{h / 2}" font-size="14" text-anchor="middle" '
            f'transform="rotate(-90 {m - 40} {h / 2})">{_escape(self.ylabel)}</text>',
            f'<text x="{w / 2}" y="{m - 20}" font-size="15" text-anchor="middle">{_escape(self.title)}</text>',
        ]
        body = "\n".join(frame + self.parts)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">\n'
            f'<rect width="{w}" height="{h}" fill="white"/>\n{body}\n</svg>\n'
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.render())
        return path


def _widen(lim):
    lo, hi = lim
    if hi > lo:
        return lo, hi
    pad = abs(lo) * 0.05 or 1.0
    return lo - pad, hi + pad


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
