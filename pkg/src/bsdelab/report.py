"""Result containers and artifact writers: deterministic CSV, JSON summary, SVG plots."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional
from xml.sax.saxutils import escape

import numpy as np


def fmt(v) -> str:
    """Stable text for one CSV cell; floats use ``repr`` so files round-trip."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(list(values))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([fmt(v) for v in r])


@dataclass
class Plot:
    title: str
    series: dict
    xlabel: str = "x"
    ylabel: str = "y"
    logx: bool = False
    logy: bool = False


@dataclass
class CaseResult:
    """What a case run produced: tables, scalar metrics, named pass/fail checks, plots."""

    case: str
    tables: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    plots: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(bool(v) for v in self.checks.values())

    def summary(self, config: Optional[dict] = None) -> dict:
        out = {"case": self.case, "passed": self.passed,
               "checks": {k: bool(v) for k, v in sorted(self.checks.items())},
               "metrics": {k: _jsonable(v) for k, v in sorted(self.metrics.items())},
               "tables": sorted(f"{k}.csv" for k in self.tables)}
        if self.notes:
            out["notes"] = list(self.notes)
        if config is not None:
            out["config"] = config
        return out

    def write(self, out_dir, svg: bool = False, config: Optional[dict] = None) -> list:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        written = []
        for name, tab in sorted(self.tables.items()):
            p = d / f"{name}.csv"
            tab.write(p)
            written.append(p)
        p = d / "summary.json"
        p.write_text(json.dumps(self.summary(config), indent=2, sort_keys=True) + "\n")
        written.append(p)
        if svg:
            for name, plot in sorted(self.plots.items()):
                p = d / f"{name}.svg"
                p.write_text(svg_plot(plot))
                written.append(p)
        return written


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return None if math.isnan(v) else (str(v) if math.isinf(v) else v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return v


# --------------------------------------------------------------------------
# SVG

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * step:
        out.append(v)
        v += step
    return out


def svg_plot(plot: Plot, width: int = 640, height: int = 420) -> str:
    """Line chart as a standalone SVG document."""
    ml, mr, mt, mb = 70, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    tx = (lambda v: math.log10(v)) if plot.logx else (lambda v: v)
    ty = (lambda v: math.log10(v)) if plot.logy else (lambda v: v)
    pts = {}
    for name, (xs, ys) in plot.series.items():
        keep = [(tx(float(x)), ty(float(y))) for x, y in zip(xs, ys)
                if math.isfinite(float(x)) and math.isfinite(float(y))
                and (not plot.logx or float(x) > 0) and (not plot.logy or float(y) > 0)]
        pts[name] = keep
    allx = [p[0] for v in pts.values() for p in v] or [0.0, 1.0]
    ally = [p[1] for v in pts.values() for p in v] or [0.0, 1.0]
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    el = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
          f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
          f'<rect width="{width}" height="{height}" fill="white"/>',
          f'<text x="{ml + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(plot.title)}</text>',
          f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for v in _ticks(x0, x1):
        X = sx(v)
        lab = f"1e{v:g}" if plot.logx else f"{v:g}"
        el.append(f'<line x1="{X:.1f}" y1="{mt + ph}" x2="{X:.1f}" y2="{mt + ph + 4}" stroke="#444"/>')
        el.append(f'<text x="{X:.1f}" y="{mt + ph + 16}" text-anchor="middle">{lab}</text>')
    for v in _ticks(y0, y1):
        Y = sy(v)
        lab = f"1e{v:g}" if plot.logy else f"{v:.4g}"
        el.append(f'<line x1="{ml - 4}" y1="{Y:.1f}" x2="{ml}" y2="{Y:.1f}" stroke="#444"/>')
        el.append(f'<line x1="{ml}" y1="{Y:.1f}" x2="{ml + pw}" y2="{Y:.1f}" stroke="#eee"/>')
        el.append(f'<text x="{ml - 6}" y="{Y + 4:.1f}" text-anchor="end">{lab}</text>')
    el.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(plot.xlabel)}</text>')
    el.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
              f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{escape(plot.ylabel)}</text>')
    for i, (name, p) in enumerate(pts.items()):
        col = PALETTE[i % len(PALETTE)]
        if p:
            path = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in p)
            el.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.6" points="{path}"/>')
            if len(p) <= 40:
                el.extend(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="2.5" fill="{col}"/>' for a, b in p)
        ly = mt + 14 + 16 * i
        el.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 30}" y2="{ly - 4}" '
                  f'stroke="{col}" stroke-width="2"/>')
        el.append(f'<text x="{ml + pw + 34}" y="{ly}">{escape(str(name))}</text>')
    el.append("</svg>")
    return "\n".join(el) + "\n"
