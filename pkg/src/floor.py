"""Floor-plan geometry: boundary sampling and containment checks."""

from __future__ import annotations

import math
import os

import numpy as np
import shapely

from src.errors import DegeneratePolygon
from src.models import FloorPlan, Scene

# "within 4% of its length margin" / "90% of its furniture within the floor plan"
FLOOR_MARGIN_FRACTION = float(os.getenv("RR_FLOOR_MARGIN", "0.04"))
FLOOR_INSIDE_THRESHOLD = 0.9


def floor_margin(floor: FloorPlan, fraction: float = FLOOR_MARGIN_FRACTION) -> float:
    """Margin equal to `fraction` of the floor's longest bounding-box side."""
    min_x, min_y, max_x, max_y = floor.polygon.bounds
    return fraction * max(max_x - min_x, max_y - min_y)


def boundary_violation_fraction(scene: Scene, margin: float) -> float:
    """Fraction of objects whose center lies inside the floor dilated by `margin`.

    Returns 1.0 when nothing violates the boundary. Points on the dilated boundary
    count as inside.
    """
    if math.isinf(margin) and margin > 0:
        return 1.0
    region = scene.floor.polygon
    if margin > 0:
        region = region.buffer(margin)
    points = shapely.points(scene.translations())
    inside = shapely.covers(region, points)
    return float(np.count_nonzero(inside)) / len(scene)


def respects_floor(
    scene: Scene,
    fraction: float = FLOOR_MARGIN_FRACTION,
    threshold: float = FLOOR_INSIDE_THRESHOLD,
) -> bool:
    """True when at least `threshold` of the objects sit inside the margin-dilated floor."""
    return boundary_violation_fraction(scene, floor_margin(scene.floor, fraction)) >= threshold


def sample_contour(
    floor: FloorPlan,
    count: int,
    seed: int | np.random.Generator | None,
) -> np.ndarray:
    """Sample `count` boundary points uniformly by arc length.

    Returns a (count, 4) array of (x, y, nx, ny) where (nx, ny) is the outward unit
    normal of the edge each point lies on.
    """
    vertices = floor.as_array()
    edges = np.roll(vertices, -1, axis=0) - vertices
    lengths = np.linalg.norm(edges, axis=1)
    perimeter = float(lengths.sum())
    if not perimeter > 0:
        raise DegeneratePolygon("floor plan has zero perimeter")

    rng = np.random.default_rng(seed)
    distances = rng.uniform(0.0, perimeter, size=count)
    cumulative = np.concatenate([[0.0], np.cumsum(lengths)])
    edge_index = np.clip(np.searchsorted(cumulative, distances, side="right") - 1, 0, len(edges) - 1)
    # zero-length edges have no arc length, so searchsorted never lands on them
    offset = (distances - cumulative[edge_index]) / lengths[edge_index]

    points = vertices[edge_index] + offset[:, None] * edges[edge_index]
    direction = edges[edge_index] / lengths[edge_index][:, None]
    # counter-clockwise winding puts the outside on the right of each edge
    normals = np.stack([direction[:, 1], -direction[:, 0]], axis=1)
    return np.concatenate([points, normals], axis=1)
