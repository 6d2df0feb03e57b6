"""SVG serialization of vector sketches.

One <polyline> per stroke with custom attributes data-part, data-linetype,
data-occlusion (3-decimal fixed point), data-hidden. Output is bit-stable
for identical inputs: fixed attribute order, fixed "%.2f" coordinates, no
timestamps.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET

import numpy as np

from .render import Stroke, VectorSketch

_STYLE = {
    "silhouette": "stroke:#1a1a1a;stroke-width:1.6",
    "contour": "stroke:#1a1a1a;stroke-width:1.4",
    "crease": "stroke:#555555;stroke-width:1.1",
    "border": "stroke:#333333;stroke-width:1.1",
    "face_mark": "stroke:#1a1a1a;stroke-width:1.4",
}


def sketch_to_svg(sketch: VectorSketch, include_hidden: bool = True) -> str:
    w, h = sketch.size
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="#ffffff"/>',
    ]
    for s in sketch.strokes:
        if s.hidden and not include_hidden:
            continue
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in s.points)
        style = _STYLE.get(s.line_type, _STYLE["contour"])
        vis = ';opacity:0.0' if s.hidden else ''
        lines.append(
            f'<polyline points="{pts}" fill="none" style="{style}{vis}" '
            f'data-part="{s.part}" data-linetype="{s.line_type}" '
            f'data-occlusion="{s.occlusion:.3f}" '
            f'data-hidden="{"true" if s.hidden else "false"}"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def save_svg(sketch: VectorSketch, path, include_hidden: bool = True) -> None:
    with open(path, "w") as f:
        f.write(sketch_to_svg(sketch, include_hidden=include_hidden))


_NUM = re.compile(r"[-+0-9.eE]+")


def _parse_points(text: str) -> np.ndarray:
    vals = [float(v) for v in _NUM.findall(text)]
    return np.asarray(vals, dtype=float).reshape(-1, 2)


def svg_to_sketch(text: str) -> VectorSketch:
    """Parse a sketch SVG; 3D source data is not stored so nodes come back
    with no source points and unknown per-node occlusion flags."""
    root = ET.fromstring(text)
    w = int(float(root.get("width", "512")))
    h = int(float(root.get("height", "512")))
    strokes = []
    for el in root.iter():
        if not el.tag.endswith("polyline"):
            continue
        strokes.append(Stroke(
            _parse_points(el.get("points", "")),
            el.get("data-linetype", "contour"),
            el.get("data-part", "unknown"),
            occlusion=float(el.get("data-occlusion", "0")),
            hidden=el.get("data-hidden", "false") == "true",
        ))
    return VectorSketch(strokes, (w, h))


def load_svg(path) -> VectorSketch:
    with open(path) as f:
        return svg_to_sketch(f.read())
