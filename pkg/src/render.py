"""Top-down SVG drawings of scenes and denoising frames."""

from __future__ import annotations

import logging
import math
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Sequence

from src.models import Scene

logger = logging.getLogger(__name__)

SVG_NS = "http://www.w3.org/2000/svg"
PADDING = 0.1  # room units around the floor bounds
CLASS_COLORS = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
]


def _fmt(value: float) -> str:
    return f"{value + 0.0:.4f}"


def scene_to_svg(scene: Scene, size: int = 512) -> ET.Element:
    """Floor outline plus one oriented rectangle and heading tick per object."""
    min_x, min_y, max_x, max_y = scene.floor.polygon.bounds
    span = max(max_x - min_x, max_y - min_y) + 2 * PADDING
    scale = size / span

    def to_px(x: float, y: float) -> tuple[float, float]:
        return (x - min_x + PADDING) * scale, (max_y + PADDING - y) * scale

    root = ET.Element("svg", {
        "xmlns": SVG_NS,
        "width": str(size),
        "height": str(size),
        "viewBox": f"0 0 {size} {size}",
    })
    points = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in (to_px(*v) for v in scene.floor.vertices))
    ET.SubElement(root, "polygon", {"points": points, "fill": "none", "stroke": "#333333", "stroke-width": "2"})

    for obj in scene.objects:
        cx, cy = to_px(*obj.translation)
        half_w, half_h = obj.bbox[0] * scale, obj.bbox[1] * scale
        # the y axis points down in SVG, so angles flip sign
        degrees = -math.degrees(obj.angle) + 0.0
        color = CLASS_COLORS[obj.class_id % len(CLASS_COLORS)]
        group = ET.SubElement(root, "g", {
            "class": f"object class-{obj.class_id}",
            "transform": f"translate({_fmt(cx)},{_fmt(cy)}) rotate({_fmt(degrees)})",
        })
        ET.SubElement(group, "rect", {
            "x": _fmt(-half_w), "y": _fmt(-half_h),
            "width": _fmt(2 * half_w), "height": _fmt(2 * half_h),
            "fill": color, "fill-opacity": "0.6", "stroke": color,
        })
        ET.SubElement(group, "line", {
            "x1": "0.0000", "y1": "0.0000", "x2": _fmt(half_w), "y2": "0.0000",
            "stroke": "#000000", "stroke-width": "1.5",
        })
    return root


def render_scene(scene: Scene, path: Path, size: int = 512) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ET.ElementTree(scene_to_svg(scene, size)).write(path, encoding="utf-8", xml_declaration=True)
    return path


def render_trajectory(snapshots: Sequence[Scene], out_dir: Path, size: int = 512) -> list[Path]:
    """One SVG per snapshot, named frame_0000.svg, frame_0001.svg, ..."""
    if not snapshots:
        raise ValueError("cannot render an empty trajectory")
    out_dir = Path(out_dir)
    paths = [render_scene(scene, out_dir / f"frame_{i:04d}.svg", size) for i, scene in enumerate(snapshots)]
    logger.info(f"Rendered {len(paths)} frames to {out_dir}")
    return paths
