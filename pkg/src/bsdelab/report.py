"""Report bundle: results CSV, verdicts JSON, provenance and SVG line charts.

Everything written here is a pure function of the results, so an identical
run reproduces every file byte for byte. Floats use 17 significant digits.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field


def fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    try:
        return format(float(v), ".17g")
    except (TypeError, ValueError):
        return str(v)


@dataclass
class Verdict:
    id: str  # stable invariant identifier, e.g. "bsde-solver/linear-oracle"
    passed: bool
    statistic: float | None = None
    tolerance: float | None = None
    detail: str = ""

    def as_dict(self):
        d = {"id": self.id, "passed": bool(self.passed)}
        if self.statistic is not None:
            d["statistic"] = fmt(float(self.statistic))
        if self.tolerance is not None:
            d["tolerance"] = fmt(float(self.tolerance))
        if self.detail:
            d["detail"] = self.detail
        return d


@dataclass
class Chart:
    name: str
    title: str
    xlabel: str
    ylabel: str
    series: list  # (label, xs, ys)
    band: tuple | None = None  # (xs, lo, hi)
    logx: bool = False
    logy: bool = False


@dataclass
class ReportBundle:
    kind: str
    columns: list
    rows: list
    verdicts: list
    charts: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([fmt(v) for v in r])
        return buf.getvalue()

    def verdicts_json(self) -> str:
        body = {"kind": self.kind, "passed": self.passed, "verdicts": [v.as_dict() for v in self.verdicts]}
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    def write(self, out_dir: str) -> list:
        os.makedirs(out_dir, exist_ok=True)
        files = {
            "results.csv": self.csv_text(),
            "verdicts.json": self.verdicts_json(),
            "provenance.json": json.dumps(self.provenance, indent=2, sort_keys=True) + "\n",
        }
        for ch in self.charts:
            files[f"{ch.name}.svg"] = svg_chart(ch)
        written = []
        for name, text in sorted(files.items()):
            path = os.path.join(out_dir, name)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            written.append(path)
        return written


# --- SVG ------------------------------------------------------------------------------

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 70, 20, 40, 50
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _tx(v, log):
    if log:
        return math.log10(v) if v > 0 else None
    return v


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def svg_chart(ch: Chart) -> str:
    pts = []
    for _, xs, ys in ch.series:
        for x, y in zip(xs, ys):
            X, Y = _tx(x, ch.logx), _tx(y, ch.logy)
            if X is not None and Y is not None and math.isfinite(X) and math.isfinite(Y):
                pts.append((X, Y))
    if ch.band:
        for x, lo, hi in zip(*ch.band):
            for y in (lo, hi):
                X, Y = _tx(x, ch.logx), _tx(y, ch.logy)
                if X is not None and Y is not None and math.isfinite(Y):
                    pts.append((X, Y))
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def sx(X):
        return _ML + (X - x0) / (x1 - x0) * pw

    def sy(Y):
        return _MT + ph - (Y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="22" text-anchor="middle" font-size="15" font-family="sans-serif">{_esc(ch.title)}</text>',
        f'<line x1="{_ML}" y1="{_MT + ph}" x2="{_ML + pw}" y2="{_MT + ph}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_MT + ph}" stroke="black"/>',
    ]
    for X in _ticks(x0, x1):
        lab = f"1e{X:.2g}" if ch.logx else f"{X:.3g}"
        out.append(f'<text x="{sx(X):.1f}" y="{_MT + ph + 18}" text-anchor="middle" font-size="11" '
                   f'font-family="sans-serif">{lab}</text>')
    for Y in _ticks(y0, y1):
        lab = f"1e{Y:.2g}" if ch.logy else f"{Y:.3g}"
        out.append(f'<text x="{_ML - 6}" y="{sy(Y) + 4:.1f}" text-anchor="end" font-size="11" '
                   f'font-family="sans-serif">{lab}</text>')
    out.append(f'<text x="{_ML + pw / 2:.1f}" y="{_H - 10}" text-anchor="middle" font-size="12" '
               f'font-family="sans-serif">{_esc(ch.xlabel)}</text>')
    out.append(f'<text x="16" y="{_MT + ph / 2:.1f}" text-anchor="middle" font-size="12" font-family="sans-serif" '
               f'transform="rotate(-90 16 {_MT + ph / 2:.1f})">{_esc(ch.ylabel)}</text>')
    if ch.band:
        xs, lo, hi = ch.band
        upper = [(sx(_tx(x, ch.logx)), sy(_tx(h, ch.logy))) for x, h in zip(xs, hi)]
        lower = [(sx(_tx(x, ch.logx)), sy(_tx(v, ch.logy))) for x, v in zip(xs, lo)]
        poly = " ".join(f"{a:.2f},{b:.2f}" for a, b in upper + lower[::-1])
        out.append(f'<polygon points="{poly}" fill="#1f77b4" fill-opacity="0.2" stroke="none"/>')
    for k, (label, xs, ys) in enumerate(ch.series):
        coords = []
        for x, y in zip(xs, ys):
            X, Y = _tx(x, ch.logx), _tx(y, ch.logy)
            if X is None or Y is None or not math.isfinite(Y):
                continue
            coords.append(f"{sx(X):.2f},{sy(Y):.2f}")
        color = _COLORS[k % len(_COLORS)]
        if coords:
            out.append(f'<polyline points="{" ".join(coords)}" fill="none" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_ML + 10}" y="{_MT + 14 + 14 * k}" font-size="11" font-family="sans-serif" '
                   f'fill="{color}">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
