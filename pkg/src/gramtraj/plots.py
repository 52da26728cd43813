"""Deterministic SVG line and scatter plots.

Output is plain text assembled from fixed-precision coordinates, so identical
inputs always give byte-identical files.
"""

from __future__ import annotations

import math
from typing import Mapping
from xml.sax.saxutils import escape

from .changepoint import ChangePointResult
from .errors import ValidationError
from .stats import pearson, spearman
from .trajectory import GapSeries

WIDTH, HEIGHT = 640, 360
MARGIN = {"left": 64, "right": 16, "top": 32, "bottom": 48}
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def _f(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


class _Canvas:
    def __init__(self, width=WIDTH, height=HEIGHT):
        self.width, self.height = width, height
        self.parts = []

    def add(self, element: str):
        self.parts.append(element)

    def text(self, x, y, s, anchor="middle", size=12, cls=None, rotate=None):
        extra = f' class="{cls}"' if cls else ""
        if rotate is not None:
            extra += f' transform="rotate({rotate} {_f(x)} {_f(y)})"'
        self.add(f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" '
                 f'text-anchor="{anchor}"{extra}>{escape(str(s))}</text>')

    def line(self, x1, y1, x2, y2, stroke="#000", cls=None, dash=None):
        extra = f' class="{cls}"' if cls else ""
        if dash:
            extra += f' stroke-dasharray="{dash}"'
        self.add(f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
                 f'stroke="{stroke}"{extra}/>')

    def polyline(self, pts, stroke, cls="series", label=None):
        data = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        extra = f' data-label="{escape(label, {chr(34): "&quot;"})}"' if label else ""
        self.add(f'<polyline class="{cls}" fill="none" stroke="{stroke}" '
                 f'stroke-width="1.5" points="{data}"{extra}/>')

    def circle(self, x, y, r=2.5, fill="#000", cls="point"):
        self.add(f'<circle class="{cls}" cx="{_f(x)}" cy="{_f(y)}" r="{r}" fill="{fill}"/>')

    def render(self) -> str:
        head = ('<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
                f'width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">\n'
                f'<rect width="{self.width}" height="{self.height}" fill="#fff"/>\n')
        return head + "\n".join(self.parts) + "\n</svg>\n"


def _span(lo, hi):
    if hi == lo:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


class _Axes:
    def __init__(self, canvas, x0, y0, w, h, xlim, ylim):
        self.c = canvas
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim, self.ylim = xlim, ylim

    def x(self, v):
        lo, hi = self.xlim
        return self.x0 + (v - lo) / (hi - lo) * self.w

    def y(self, v):
        lo, hi = self.ylim
        return self.y0 + self.h - (v - lo) / (hi - lo) * self.h

    def frame(self):
        c = self.c
        c.add(f'<rect class="frame" x="{_f(self.x0)}" y="{_f(self.y0)}" width="{_f(self.w)}" '
              f'height="{_f(self.h)}" fill="none" stroke="#444"/>')

    def yticks(self, n=5, fmt="{:.2f}"):
        lo, hi = self.ylim
        for i in range(n + 1):
            v = lo + (hi - lo) * i / n
            self.c.text(self.x0 - 6, self.y(v) + 4, fmt.format(v), anchor="end", size=10)


def plot_gap_trajectory(series: GapSeries, changepoint: ChangePointResult | None = None,
                        title: str | None = None) -> str:
    """Gap against checkpoint step with a zero line and the change point marked."""
    c = _Canvas()
    steps, gaps = series.steps, series.gaps
    ax = _Axes(c, MARGIN["left"], MARGIN["top"],
               WIDTH - MARGIN["left"] - MARGIN["right"],
               HEIGHT - MARGIN["top"] - MARGIN["bottom"],
               _span(min(steps), max(steps)), _span(min(min(gaps), 0.0), max(max(gaps), 0.0)))
    ax.frame()
    ax.yticks()
    c.text(WIDTH / 2, 20, title or series.class_name, size=14)
    c.text(WIDTH / 2, HEIGHT - 10, "checkpoint step", size=11)
    c.text(16, HEIGHT / 2, "log-perplexity gap (good - bad)", size=11, rotate=-90)
    for t in (steps[0], steps[len(steps) // 2], steps[-1]):
        c.text(ax.x(t), ax.y0 + ax.h + 16, f"{t:,}", size=10)
    c.line(ax.x0, ax.y(0.0), ax.x0 + ax.w, ax.y(0.0), stroke="#888", cls="zero-line", dash="4 3")
    pts = [(ax.x(t), ax.y(g)) for t, g in zip(steps, gaps)]
    c.polyline(pts, PALETTE[0], label=series.class_name)
    for x, y in pts:
        c.circle(x, y, fill=PALETTE[0])
    if changepoint is not None and changepoint.detected:
        xv = ax.x(changepoint.step)
        c.line(xv, ax.y0, xv, ax.y0 + ax.h, stroke=PALETTE[1], cls="changepoint")
        c.text(xv + 4, ax.y0 + 12, f"change @ {changepoint.step:,}", anchor="start", size=10)
    return c.render()


def _check_same_classes(accuracies):
    sets = {m: frozenset(v) for m, v in accuracies.items()}
    ref = next(iter(sets.values()))
    for m, s in sets.items():
        if s != ref:
            raise ValidationError(f"model {m!r} covers a different class set")
    return ref


def plot_accuracy_comparison(accuracies: Mapping[str, Mapping[str, float]], order_by: str | None = None) -> str:
    """One polyline per model over classes sorted by ``order_by``'s ascending accuracy."""
    if not accuracies:
        raise ValidationError("need at least one model")
    classes = _check_same_classes(accuracies)
    models = sorted(accuracies)
    order_by = order_by or models[0]
    if order_by not in accuracies:
        raise ValidationError(f"unknown ordering model {order_by!r}")
    ref = accuracies[order_by]
    ordered = sorted(classes, key=lambda k: (ref[k], k))
    c = _Canvas(width=max(WIDTH, 24 * len(ordered) + 120), height=HEIGHT + 120)
    w = c.width - MARGIN["left"] - MARGIN["right"] - 100
    h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    n = len(ordered)
    ax = _Axes(c, MARGIN["left"], MARGIN["top"], w, h, (-0.5, n - 0.5), (0.0, 100.0))
    ax.frame()
    ax.yticks(fmt="{:.0f}")
    c.text(c.width / 2, 20, f"accuracy by class, ordered by {order_by}", size=14)
    for i, name in enumerate(ordered):
        c.text(ax.x(i), ax.y0 + h + 10, name, anchor="end", size=9, rotate=-60)
    for j, m in enumerate(models):
        color = PALETTE[j % len(PALETTE)]
        c.polyline([(ax.x(i), ax.y(accuracies[m][k])) for i, k in enumerate(ordered)], color, label=m)
        ly = ax.y0 + 14 * j + 10
        c.line(ax.x0 + w + 10, ly, ax.x0 + w + 30, ly, stroke=color, cls="legend")
        c.text(ax.x0 + w + 34, ly + 4, m, anchor="start", size=10)
    return c.render()


def plot_correlation_grid(accuracies: Mapping[str, Mapping[str, float]], reference: str) -> str:
    """Scatter of ``reference`` accuracy against each other model, one panel per model."""
    classes = sorted(_check_same_classes(accuracies))
    others = [m for m in sorted(accuracies) if m != reference]
    if reference not in accuracies or not others:
        raise ValidationError("correlation grid needs the reference model and at least one other")
    cols = min(3, len(others))
    rows = math.ceil(len(others) / cols)
    pw, ph = 220, 200
    c = _Canvas(width=cols * pw + 20, height=rows * ph + 40)
    c.text(c.width / 2, 20, f"scatter grid: {reference} accuracy vs each model", size=13)
    x_ref = [accuracies[reference][k] for k in classes]
    for idx, m in enumerate(others):
        r, q = divmod(idx, cols)
        ax = _Axes(c, 10 + q * pw + 36, 40 + r * ph, pw - 50, ph - 60, (0.0, 100.0), (0.0, 100.0))
        ax.frame()
        y = [accuracies[m][k] for k in classes]
        for xv, yv in zip(x_ref, y):
            c.circle(ax.x(xv), ax.y(yv), r=2, fill=PALETTE[idx % len(PALETTE)])
        try:
            label = f"{m}: r={pearson(x_ref, y):.2f} rho={spearman(x_ref, y):.2f}"
        except ValueError:
            label = f"{m}: correlation undefined"
        c.text(ax.x0 + ax.w / 2, ax.y0 + ax.h + 16, label, size=9)
    return c.render()
