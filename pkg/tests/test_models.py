import math

import numpy as np
import pytest

from src.errors import InvalidScene
from src.models import FloorPlan, NoiseSpec, ObjectState, Scene


def test_object_rejects_non_unit_rotation():
    with pytest.raises(InvalidScene):
        ObjectState(0, (0.0, 0.0), (1.0, 1.0), (0.1, 0.1))


def test_object_rejects_non_positive_bbox():
    with pytest.raises(InvalidScene):
        ObjectState(0, (0.0, 0.0), (1.0, 0.0), (0.1, 0.0))


def test_object_rejects_nan_translation():
    with pytest.raises(InvalidScene):
        ObjectState(0, (float("nan"), 0.0), (1.0, 0.0), (0.1, 0.1))


def test_from_angle_matches_angle_property():
    obj = ObjectState.from_angle(1, (0.2, -0.1), 2.0, (0.1, 0.1))
    assert obj.angle == pytest.approx(2.0)
    assert math.hypot(*obj.rotation) == pytest.approx(1.0)


def test_scene_rejects_class_outside_count():
    obj = ObjectState(3, (0.0, 0.0), (1.0, 0.0), (0.1, 0.1))
    with pytest.raises(InvalidScene):
        Scene((obj,), FloorPlan.square(), class_count=2)


def test_scene_rejects_empty_object_set():
    with pytest.raises(InvalidScene):
        Scene((), FloorPlan.square(), class_count=1)


def test_floor_rejects_clockwise_polygon():
    with pytest.raises(InvalidScene):
        FloorPlan(((0, 0), (0, 1), (1, 1), (1, 0)))


def test_floor_from_points_fixes_winding():
    floor = FloorPlan.from_points([(0, 0), (0, 1), (1, 1), (1, 0)])
    assert floor.polygon.exterior.is_ccw
    assert floor.polygon.area == pytest.approx(1.0)


def test_floor_rejects_self_intersecting_polygon():
    with pytest.raises(InvalidScene):
        FloorPlan(((0, 0), (1, 1), (1, 0), (0, 1)))


def test_scene_arrays_follow_object_order(small_scene):
    assert small_scene.translations().shape == (3, 2)
    assert small_scene.class_ids().tolist() == [0, 1, 1]
    assert small_scene.shape_ids().tolist() == [0, 2, 3]
    assert small_scene.class_counts() == {0: 1, 1: 2}
    assert small_scene.angles()[1] == pytest.approx(math.pi / 2)


def test_with_poses_keeps_attributes(small_scene):
    moved = small_scene.with_poses(np.zeros((3, 2)), np.tile([0.0, 1.0], (3, 1)))
    assert np.allclose(moved.translations(), 0.0)
    assert moved.bboxes().tolist() == small_scene.bboxes().tolist()
    assert moved.shape_ids().tolist() == small_scene.shape_ids().tolist()


def test_with_poses_rejects_wrong_shape(small_scene):
    with pytest.raises(InvalidScene):
        small_scene.with_poses(np.zeros((2, 2)), np.zeros((2, 2)))


def test_permuted_reorders_objects(small_scene):
    permuted = small_scene.permuted([2, 0, 1])
    assert permuted.objects[0] == small_scene.objects[2]
    assert permuted.class_counts() == small_scene.class_counts()


def test_scene_json_round_trip(small_scene):
    assert Scene.from_json(small_scene.to_json()) == small_scene


def test_scene_from_dict_missing_field():
    with pytest.raises(InvalidScene, match="objects"):
        Scene.from_dict({"floor": [[0, 0], [1, 0], [1, 1]], "class_count": 1})


@pytest.mark.parametrize("field,value", [("t", 5), ("r", "up"), ("b", [0.1, "wide"]), ("class", "chair"), ("shape", None)])
def test_object_from_dict_rejects_wrong_types(field, value):
    data = {"class": 0, "t": [0, 0], "r": [1, 0], "b": [0.1, 0.1], "shape": 0}
    data[field] = value
    with pytest.raises(InvalidScene):
        ObjectState.from_dict(data)


def test_scene_from_dict_rejects_wrong_types():
    obj = {"class": 0, "t": [0, 0], "r": [1, 0], "b": [0.1, 0.1]}
    with pytest.raises(InvalidScene):
        Scene.from_dict({"objects": 3, "floor": [[0, 0], [1, 0], [1, 1]], "class_count": 1})
    with pytest.raises(InvalidScene):
        Scene.from_dict({"objects": [obj], "floor": [0, 1, 2], "class_count": 1})
    with pytest.raises(InvalidScene):
        Scene.from_dict({"objects": [obj], "floor": [[0, 0], [1, 0], [1, 1]], "class_count": "one"})


def test_object_dict_defaults_shape_to_zero():
    obj = ObjectState.from_dict({"class": 0, "t": [0, 0], "r": [1, 0], "b": [0.1, 0.1]})
    assert obj.shape_id == 0


def test_noise_spec_rejects_negative():
    with pytest.raises(InvalidScene):
        NoiseSpec(sigma_t=-0.1, sigma_r=0.0)
