import math

import numpy as np
import pytest
from shapely.geometry import Point

from src.floor import boundary_violation_fraction, floor_margin, respects_floor, sample_contour
from src.models import FloorPlan, ObjectState, Scene


def _scene_at(points, floor=None):
    objects = tuple(ObjectState(0, p, (1.0, 0.0), (0.05, 0.05)) for p in points)
    return Scene(objects, floor or FloorPlan.square(), class_count=1)


def test_margin_is_fraction_of_longest_side():
    floor = FloorPlan(((0, 0), (4, 0), (4, 2), (0, 2)))
    assert floor_margin(floor) == pytest.approx(0.16)


def test_boundary_fraction_counts_inside_objects():
    scene = _scene_at([(0, 0), (0.5, 0.5), (1.5, 0), (0, -3)])
    assert boundary_violation_fraction(scene, 0.0) == pytest.approx(0.5)


def test_margin_admits_objects_just_outside():
    scene = _scene_at([(1.05, 0.0)])
    assert boundary_violation_fraction(scene, 0.0) == 0.0
    assert boundary_violation_fraction(scene, 0.08) == 1.0


def test_infinite_margin_accepts_everything():
    scene = _scene_at([(100.0, 100.0)])
    assert boundary_violation_fraction(scene, math.inf) == 1.0


def test_points_on_boundary_count_as_inside():
    scene = _scene_at([(1.0, 0.0), (-1.0, -1.0)])
    assert boundary_violation_fraction(scene, 0.0) == 1.0


def test_respects_floor_threshold():
    inside = [(0.0, 0.1 * i) for i in range(9)]
    assert respects_floor(_scene_at(inside + [(5.0, 5.0)]))
    assert not respects_floor(_scene_at(inside[:8] + [(5.0, 5.0), (6.0, 6.0)]))


def test_contour_points_lie_on_boundary():
    floor = FloorPlan.from_points([(0, 0), (3, 0), (3, 1), (1, 1), (1, 2), (0, 2)])
    samples = sample_contour(floor, 200, seed=0)
    assert samples.shape == (200, 4)
    boundary = floor.polygon.exterior
    assert max(boundary.distance(Point(x, y)) for x, y in samples[:, :2]) < 1e-9


def test_contour_normals_point_outward():
    floor = FloorPlan.square()
    samples = sample_contour(floor, 100, seed=1)
    assert np.allclose(np.linalg.norm(samples[:, 2:], axis=1), 1.0)
    outside = samples[:, :2] + 0.01 * samples[:, 2:]
    assert not any(floor.polygon.contains(Point(x, y)) for x, y in outside)


def test_contour_sampling_is_uniform_by_length():
    floor = FloorPlan(((0, 0), (3, 0), (3, 1), (0, 1)))
    samples = sample_contour(floor, 8000, seed=2)
    on_long_edges = np.isclose(samples[:, 3], 1.0) | np.isclose(samples[:, 3], -1.0)
    assert on_long_edges.mean() == pytest.approx(0.75, abs=0.03)


def test_contour_is_deterministic():
    floor = FloorPlan.square()
    assert np.array_equal(sample_contour(floor, 10, seed=4), sample_contour(floor, 10, seed=4))
