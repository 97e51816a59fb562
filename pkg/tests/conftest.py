import math
import os

import pytest

from src.config import str_to_bool
from src.denoiser import DenoiserConfig, init_params
from src.models import FloorPlan, ObjectState, Scene
from src.table_chair import TableChairSpec, Variant, generate_clean


def pytest_collection_modifyitems(config, items):
    if str_to_bool(os.getenv("RR_RUN_SLOW", "false")):
        return
    skip = pytest.mark.skip(reason="set RR_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def tiny_config():
    return DenoiserConfig(
        class_count=2,
        shape_count=4,
        token_dim=16,
        head_count=2,
        layer_count=1,
        mlp_hidden_dim=16,
        pe_frequencies=4,
        attribute_dim=8,
        floor_point_dims=(8, 8, 16),
        floor_sample_count=20,
        head_hidden_dim=8,
    )


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config, seed=0)


@pytest.fixture
def small_scene():
    objects = (
        ObjectState.from_angle(0, (0.1, 0.2), 0.0, (0.1, 0.2), shape_id=0),
        ObjectState.from_angle(1, (-0.3, 0.4), math.pi / 2, (0.05, 0.05), shape_id=2),
        ObjectState.from_angle(1, (0.5, -0.5), -math.pi / 3, (0.05, 0.05), shape_id=3),
    )
    return Scene(objects, FloorPlan.square(), class_count=2)


@pytest.fixture
def row_scene():
    return generate_clean(TableChairSpec(Variant.SYMMETRY_PARALLELISM, seed=3))
