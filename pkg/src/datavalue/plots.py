"""Static SVG 1.1 charts for experiment reports (no scripting, no external assets)."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

logger = logging.getLogger(__name__)

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 160, 40, 60
PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf", "#393b79"]


def _f(x: float) -> str:
    return f"{x:.2f}"


class _Canvas:
    def __init__(self, title, xlabel, ylabel, xlim, ylim):
        self.parts = []
        self.xlim, self.ylim = xlim, ylim
        self.pw = WIDTH - LEFT - RIGHT
        self.ph = HEIGHT - TOP - BOTTOM
        self.parts.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
        self.text(WIDTH / 2, 22, title, size=15, anchor="middle")
        self.text(LEFT + self.pw / 2, HEIGHT - 15, xlabel, anchor="middle")
        self.parts.append(
            f'<text x="18" y="{_f(TOP + self.ph / 2)}" font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 18 {_f(TOP + self.ph / 2)})">{escape(ylabel)}</text>')
        self.parts.append(f'<rect x="{LEFT}" y="{TOP}" width="{self.pw}" height="{self.ph}" '
                          'fill="none" stroke="black"/>')

    def x(self, v):
        lo, hi = self.xlim
        return LEFT + (v - lo) / (hi - lo) * self.pw if hi > lo else LEFT + self.pw / 2

    def y(self, v):
        lo, hi = self.ylim
        return TOP + self.ph - (v - lo) / (hi - lo) * self.ph if hi > lo else TOP + self.ph / 2

    def text(self, x, y, s, size=12, anchor="start"):
        self.parts.append(f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" '
                          f'text-anchor="{anchor}">{escape(str(s))}</text>')

    def yticks(self, n=5, fmt="{:.2f}"):
        lo, hi = self.ylim
        for i in range(n + 1):
            v = lo + (hi - lo) * i / n
            yy = self.y(v)
            self.parts.append(f'<line x1="{LEFT - 4}" y1="{_f(yy)}" x2="{LEFT}" y2="{_f(yy)}" '
                              'stroke="black"/>')
            self.text(LEFT - 6, yy + 4, fmt.format(v), size=10, anchor="end")

    def xticks(self, values, labels=None):
        for i, v in enumerate(values):
            xx = self.x(v)
            self.parts.append(f'<line x1="{_f(xx)}" y1="{TOP + self.ph}" x2="{_f(xx)}" '
                              f'y2="{TOP + self.ph + 4}" stroke="black"/>')
            lab = labels[i] if labels else f"{v:g}"
            self.text(xx, TOP + self.ph + 16, lab, size=10, anchor="middle")

    def legend(self, names):
        for i, name in enumerate(names):
            yy = TOP + 10 + 16 * i
            x0 = WIDTH - RIGHT + 12
            self.parts.append(f'<rect x="{x0}" y="{yy - 9}" width="10" height="10" '
                              f'fill="{PALETTE[i % len(PALETTE)]}"/>')
            self.text(x0 + 14, yy, name, size=11)

    def render(self) -> str:
        body = "\n".join(self.parts)
        return ('<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
                f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">\n'
                f"{body}\n</svg>\n")


def _finite(v) -> bool:
    return isinstance(v, (int, float)) and math.isfinite(v)


def detect_chart(summary) -> str | None:
    groups = defaultdict(list)
    for r in summary:
        if r["task"] == "detect" and _finite(r["metric_value"]):
            groups[r["valuator"]].append(float(r["metric_value"]))
    if not groups:
        return None
    names = sorted(groups)
    c = _Canvas("Noisy data detection", "valuator", "F1 score", (0, len(names)), (0, 1))
    c.yticks()
    bw = 0.6
    for i, name in enumerate(names):
        vals = groups[name]
        mean = sum(vals) / len(vals)
        x0, x1 = c.x(i + 0.5 - bw / 2), c.x(i + 0.5 + bw / 2)
        col = PALETTE[i % len(PALETTE)]
        c.parts.append(f'<rect class="bar" x="{_f(x0)}" y="{_f(c.y(mean))}" width="{_f(x1 - x0)}" '
                       f'height="{_f(c.y(0) - c.y(mean))}" fill="{col}"/>')
        xm = c.x(i + 0.5)
        c.parts.append(f'<line x1="{_f(xm)}" y1="{_f(c.y(min(vals)))}" x2="{_f(xm)}" '
                       f'y2="{_f(c.y(max(vals)))}" stroke="black" stroke-width="1.5"/>')
    c.xticks([i + 0.5 for i in range(len(names))], names)
    c.legend(names)
    return c.render()


def curve_chart(curves, task: str) -> str | None:
    acc = defaultdict(lambda: defaultdict(list))
    for r in curves:
        if r["task"] == task and _finite(r["perf"]):
            acc[r["valuator"]][int(r["k"])].append(float(r["perf"]))
    if not acc:
        return None
    names = sorted(acc)
    ks = sorted({k for v in acc.values() for k in v})
    perfs = [p for v in acc.values() for ps in v.values() for p in ps]
    lo, hi = min(perfs), max(perfs)
    pad = 0.05 * (hi - lo) if hi > lo else 0.05
    xlabel = "points removed (highest value first)" if task == "removal" \
        else "points added (lowest value first)"
    c = _Canvas(f"Point {task} experiment", xlabel, "test performance",
                (ks[0], ks[-1]), (lo - pad, hi + pad))
    c.yticks(fmt="{:.3f}")
    c.xticks(ks)
    for i, name in enumerate(names):
        pts = " ".join(f"{_f(c.x(k))},{_f(c.y(sum(ps) / len(ps)))}"
                       for k, ps in sorted(acc[name].items()))
        c.parts.append(f'<polyline points="{pts}" fill="none" '
                       f'stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="2"/>')
    c.legend(names)
    return c.render()


def runtime_chart(summary) -> str | None:
    f1, rt = defaultdict(list), defaultdict(list)
    for r in summary:
        if r["task"] == "detect" and _finite(r["metric_value"]):
            f1[r["valuator"]].append(float(r["metric_value"]))
        if r["task"] == "runtime" and _finite(r["metric_value"]) and r["metric_value"] > 0:
            rt[r["valuator"]].append(float(r["metric_value"]))
    names = sorted(set(f1) & set(rt))
    if not names:
        return None
    pts = {n: (sum(f1[n]) / len(f1[n]), math.log10(sum(rt[n]) / len(rt[n]))) for n in names}
    ys = [p[1] for p in pts.values()]
    lo, hi = math.floor(min(ys)), math.ceil(max(ys))
    if hi == lo:
        hi = lo + 1
    c = _Canvas("Runtime vs detection quality", "F1 score", "runtime (log10 seconds)",
                (0, 1), (lo, hi))
    c.yticks(n=hi - lo, fmt="{:.0f}")
    c.xticks([0, 0.25, 0.5, 0.75, 1.0])
    for i, n in enumerate(names):
        x, y = pts[n]
        c.parts.append(f'<circle cx="{_f(c.x(x))}" cy="{_f(c.y(y))}" r="5" '
                       f'fill="{PALETTE[i % len(PALETTE)]}"/>')
    c.legend(names)
    return c.render()


def emit_svg(report, out_dir) -> list:
    """Write one SVG per plottable task; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    charts = {
        "detect": detect_chart(report.summary),
        "removal": curve_chart(report.curves, "removal"),
        "addition": curve_chart(report.curves, "addition"),
        "runtime": runtime_chart(report.summary),
    }
    written = []
    for task, svg in charts.items():
        if svg is None:
            continue
        path = out / f"{task}.svg"
        path.write_text(svg, encoding="utf-8")
        written.append(path)
    if not written:
        logger.info("no plottable rows in report; no SVG written")
    return written
