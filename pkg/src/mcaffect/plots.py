"""Static SVG renderings derived from report.json.

Data marks are drawn inside a group whose ``transform`` maps data
coordinates to the canvas, so polyline/polygon points are stored in data
units (turn, standardized affect) and can be read back exactly.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET

from .estimator import KDEProfile

WIDTH, HEIGHT = 640, 400
MARGIN = {"left": 56, "right": 24, "top": 28, "bottom": 44}
COLORS = {"teacher": "#1f77b4", "student": "#d62728"}


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _svg_root(title: str) -> ET.Element:
    root = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        width=str(WIDTH),
        height=str(HEIGHT),
        viewBox=f"0 0 {WIDTH} {HEIGHT}",
    )
    ET.SubElement(root, "title").text = title
    ET.SubElement(root, "rect", x="0", y="0", width=str(WIDTH), height=str(HEIGHT), fill="white")
    return root


def _frame(xmin, xmax, ymin, ymax):
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    a = pw / (xmax - xmin)
    d = -ph / (ymax - ymin)
    e = MARGIN["left"] - a * xmin
    f = MARGIN["top"] - d * ymax
    return a, d, e, f


def _axes(root, xmin, xmax, ymin, ymax, xticks, yticks, xlabel, ylabel):
    a, d, e, f = _frame(xmin, xmax, ymin, ymax)
    px = lambda x: a * x + e  # noqa: E731
    py = lambda y: d * y + f  # noqa: E731
    axes = ET.SubElement(root, "g", {"class": "axes", "stroke": "#444", "font-size": "11", "font-family": "sans-serif"})
    ET.SubElement(axes, "line", x1=_fmt(px(xmin)), y1=_fmt(py(ymin)), x2=_fmt(px(xmax)), y2=_fmt(py(ymin)))
    ET.SubElement(axes, "line", x1=_fmt(px(xmin)), y1=_fmt(py(ymin)), x2=_fmt(px(xmin)), y2=_fmt(py(ymax)))
    if ymin < 0 < ymax:
        ET.SubElement(axes, "line", {"x1": _fmt(px(xmin)), "y1": _fmt(py(0)), "x2": _fmt(px(xmax)),
                                     "y2": _fmt(py(0)), "stroke-dasharray": "3,3", "stroke": "#999"})
    for x in xticks:
        t = ET.SubElement(axes, "text", {"x": _fmt(px(x)), "y": _fmt(py(ymin) + 16), "text-anchor": "middle", "stroke": "none"})
        t.text = f"{x:g}"
    for y in yticks:
        t = ET.SubElement(axes, "text", {"x": _fmt(px(xmin) - 6), "y": _fmt(py(y) + 4), "text-anchor": "end", "stroke": "none"})
        t.text = f"{y:g}"
    lx = ET.SubElement(axes, "text", {"x": _fmt(px((xmin + xmax) / 2)), "y": str(HEIGHT - 8), "text-anchor": "middle", "stroke": "none"})
    lx.text = xlabel
    ly = ET.SubElement(axes, "text", {"x": "14", "y": _fmt(py((ymin + ymax) / 2)), "text-anchor": "middle", "stroke": "none",
                                      "transform": f"rotate(-90 14 {_fmt(py((ymin + ymax) / 2))})"})
    ly.text = ylabel


def _data_group(root, xmin, xmax, ymin, ymax) -> ET.Element:
    a, d, e, f = _frame(xmin, xmax, ymin, ymax)
    return ET.SubElement(root, "g", {"class": "data", "transform": f"matrix({_fmt(a)} 0 0 {_fmt(d)} {_fmt(e)} {_fmt(f)})"})


def _to_string(root: ET.Element) -> str:
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def trajectory_svg(report: dict) -> str:
    """Mean trajectories with +/-1 standard deviation bands for both speakers."""
    trajs = report["trajectories"]
    series = {}
    for role in ("teacher", "student"):
        pts = trajs[role]
        series[role] = [(p["turn"], p["std_mean"], math.sqrt(p["std_variance"])) for p in pts]
    all_pts = series["teacher"] + series["student"]
    xmax = max(1, max(t for t, _, _ in all_pts))
    ylo = min(-1.0, min(m - s for _, m, s in all_pts))
    yhi = max(1.0, max(m + s for _, m, s in all_pts))
    ymin, ymax = math.floor(ylo * 10) / 10, math.ceil(yhi * 10) / 10

    root = _svg_root(f"Affective trajectories: {report.get('topic', '')}")
    _axes(root, 0, xmax, ymin, ymax, range(0, xmax + 1), [-1, -0.5, 0, 0.5, 1], "turn", "standardized affect")
    data = _data_group(root, 0, xmax, ymin, ymax)
    for role, pts in series.items():
        upper = [(t, m + s) for t, m, s in pts]
        lower = [(t, m - s) for t, m, s in reversed(pts)]
        ET.SubElement(data, "polygon", {
            "class": "band", "data-role": role, "fill": COLORS[role], "fill-opacity": "0.2", "stroke": "none",
            "points": " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in upper + lower),
        })
    for role, pts in series.items():
        ET.SubElement(data, "polyline", {
            "class": "mean", "data-role": role, "fill": "none", "stroke": COLORS[role], "stroke-width": "2",
            "vector-effect": "non-scaling-stroke",
            "points": " ".join(f"{_fmt(t)},{_fmt(m)}" for t, m, _ in pts),
        })
    legend = ET.SubElement(root, "g", {"class": "legend", "font-size": "11", "font-family": "sans-serif"})
    for i, (role, beta) in enumerate((r, report["slopes"][r]["beta"]) for r in ("teacher", "student")):
        y = MARGIN["top"] + 4 + 16 * i
        ET.SubElement(legend, "rect", x=str(WIDTH - 190), y=str(y - 9), width="12", height="10", fill=COLORS[role])
        ET.SubElement(legend, "text", x=str(WIDTH - 172), y=str(y)).text = f"{role} (slope {beta:+.4f})"
    return _to_string(root)


def correlogram_svg(report: dict) -> str:
    """Bar chart of the cross-correlation at each lag; the optimal lag is highlighted."""
    corr = report["correlogram"]
    lags = [v["lag"] for v in corr["values"]]
    xmin, xmax = min(lags) - 0.5, max(lags) + 0.5
    root = _svg_root(f"Cross-correlation by lag: {report.get('topic', '')}")
    _axes(root, xmin, xmax, -1, 1, lags, [-1, -0.5, 0, 0.5, 1], "lag (turns)", "R_TS")
    a, d, e, f = _frame(xmin, xmax, -1, 1)
    bars = ET.SubElement(root, "g", {"class": "bars"})
    for v in corr["values"]:
        x0 = a * (v["lag"] - 0.35) + e
        if v["r"] is None:
            t = ET.SubElement(bars, "text", {"x": _fmt(a * v["lag"] + e), "y": _fmt(f - 4), "text-anchor": "middle",
                                             "font-size": "10", "font-family": "sans-serif"})
            t.text = "n/a"
            continue
        top, bottom = d * max(v["r"], 0) + f, d * min(v["r"], 0) + f
        optimal = v["lag"] == corr["optimal_lag"]
        ET.SubElement(bars, "rect", {
            "class": "bar optimal" if optimal else "bar", "data-lag": str(v["lag"]), "data-r": repr(v["r"]),
            "x": _fmt(x0), "y": _fmt(top), "width": _fmt(a * 0.7), "height": _fmt(max(bottom - top, 0.5)),
            "fill": "#ff7f0e" if optimal else "#7f7f7f",
        })
    caption = ET.SubElement(root, "text", {"x": str(WIDTH - MARGIN["right"]), "y": "18", "text-anchor": "end",
                                           "font-size": "11", "font-family": "sans-serif"})
    caption.text = f"L* = {corr['optimal_lag']:+d}, R(L*) = {corr['optimal_r']:.3f}"
    return _to_string(root)


def kde_svg(profile: KDEProfile, title: str = "") -> str:
    g = profile.grid
    xmin, xmax = float(g[0]), float(g[-1])
    ymax = 1.0 if profile.density is None else float(profile.density.max()) * 1.05
    root = _svg_root(title or f"Score density, utterance {profile.utterance_index}")
    _axes(root, xmin, xmax, 0, ymax, [-1, -0.5, 0, 0.5, 1], [0, round(ymax / 2, 2)], "standardized affect", "density")
    data = _data_group(root, xmin, xmax, 0, ymax)
    if profile.density is None:
        ET.SubElement(data, "line", {"class": "point-mass", "x1": _fmt(profile.point_mass), "x2": _fmt(profile.point_mass),
                                     "y1": "0", "y2": _fmt(ymax), "stroke": "#2ca02c", "vector-effect": "non-scaling-stroke"})
    else:
        ET.SubElement(data, "polyline", {
            "class": "density", "fill": "none", "stroke": "#2ca02c", "vector-effect": "non-scaling-stroke",
            "points": " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(g, profile.density)),
        })
    return _to_string(root)
