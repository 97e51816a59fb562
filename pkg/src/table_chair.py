"""Procedural Table-Chair scenes and their rearrangement success criteria.

Three environments are generated, each isolating one kind of regularity:

  - symmetry_parallelism: two rectangular tables side by side, each with two opposed
    rows of 3 chairs facing the table.
  - uniform_spacing: two round tables, each with 2-6 chairs equally spaced on a circle
    and facing the table center.
  - grouping_by_shape: as symmetry_parallelism, but each row uses one of two chair
    shapes, so the regularity is "same shapes on the same side".

All scenes live in the square floor [-1, 1]^2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from src.assignment import match_scenes
from src.errors import ConfigError, VariantMismatch
from src.models import FloorPlan, NoiseSpec, ObjectState, Scene
from src.perturb import perturb

logger = logging.getLogger(__name__)

TABLE_CLASS = 0
CHAIR_CLASS = 1
CLASS_COUNT = 2

RECT_TABLE_SHAPE = 0
ROUND_TABLE_SHAPE = 1
CHAIR_SHAPE_A = 2
CHAIR_SHAPE_B = 3
SHAPE_COUNT = 4

# Dimensions in normalized room units (half-extents)
RECT_TABLE_HALF = (0.08, 0.2)
ROUND_TABLE_HALF = (0.12, 0.12)
CHAIR_HALF = (0.04, 0.04)
ROW_OFFSET = 0.14  # table center to chair row, along the table's local x axis
ROW_SPACING = 0.12  # between neighbouring chairs of a row
SEPARATION_RANGE = (0.4, 0.8)
ROUND_SEPARATION_RANGE = (0.7, 1.0)
CHAIR_RADIUS = 0.25

# Bimodal perturbation: (translation std, rotation-angle std) of the kernel-std prior
SMALL_NOISE = (0.01, math.pi / 90)
LARGE_NOISE = (0.25, math.pi / 4)

# Success thresholds
MAX_MEAN_MOVE = 0.5
MAX_ANGULAR_OFFSET = math.pi / 60
MAX_ROW_EMD = 0.08
MAX_GROUP_EMD = 0.05
MAX_SPACING_VARIANCE = 0.009
MAX_RADIUS_ERROR = 0.01


class Variant(str, Enum):
    SYMMETRY_PARALLELISM = "symmetry_parallelism"
    UNIFORM_SPACING = "uniform_spacing"
    GROUPING_BY_SHAPE = "grouping_by_shape"


ROW_VARIANTS = (Variant.SYMMETRY_PARALLELISM, Variant.GROUPING_BY_SHAPE)


@dataclass(frozen=True)
class TableChairSpec:
    """Parameters of one generated Table-Chair scene."""
    variant: Variant
    table_count: int = 2
    chairs_per_side: int = 3
    chairs_per_table_range: tuple[int, int] = (2, 6)
    chair_radius: float = CHAIR_RADIUS
    seed: int = 0
    random_phase: bool = True  # uniform_spacing: rotate each chair ring by a random phase

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.table_count != 2:
            raise ConfigError(f"Table-Chair scenes have 2 tables, got {self.table_count}")
        if self.variant in ROW_VARIANTS and self.chairs_per_side != 3:
            raise ConfigError(f"row variants use 3 chairs per side, got {self.chairs_per_side}")
        low, high = self.chairs_per_table_range
        if not 2 <= low <= high <= 6:
            raise ConfigError(f"chairs_per_table_range must lie within [2, 6], got {(low, high)}")
        if self.chair_radius <= 0:
            raise ConfigError(f"chair_radius must be positive, got {self.chair_radius}")


@dataclass(frozen=True)
class SuccessReport:
    """Outcome of grading one rearrangement against a variant's criteria."""
    success: bool
    mean_move_distance: float
    max_angular_offset: float  # radians
    mean_angular_offset: float  # radians
    emd_residual: float | None = None  # row variants
    spacing_variance: float | None = None  # uniform_spacing, radians^2
    radius_error: float | None = None  # uniform_spacing
    grouping_valid: bool | None = None  # grouping_by_shape


def _wrap(angle: np.ndarray) -> np.ndarray:
    return (angle + np.pi) % (2 * np.pi) - np.pi


def ideal_chair_slots(
    table_translation: Iterable[float],
    table_rotation: Iterable[float],
    chairs_per_side: int = 3,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Regular chair placement around a rectangular table pose.

    Returns (positions (m, 2), facing angles (m,), side (m,)) with side -1 for the row
    on the table's local -x side and +1 for the opposite row.
    """
    center = np.asarray(tuple(table_translation), dtype=np.float64)
    cos_t, sin_t = tuple(table_rotation)
    table_angle = math.atan2(sin_t, cos_t)

    positions, facings, sides = [], [], []
    for side in (-1, 1):
        for k in range(chairs_per_side):
            lx = side * ROW_OFFSET
            ly = (k - (chairs_per_side - 1) / 2) * ROW_SPACING
            positions.append(center + np.array([cos_t * lx - sin_t * ly, sin_t * lx + cos_t * ly]))
            facings.append(table_angle if side < 0 else table_angle + math.pi)
            sides.append(side)
    return np.array(positions), _wrap(np.array(facings)), np.array(sides)


def _table_centers(rng: np.random.Generator, separation_range: tuple[float, float]) -> list[tuple[float, float]]:
    separation = rng.uniform(*separation_range)
    return [(-separation / 2, 0.0), (separation / 2, 0.0)]


def _row_scene(spec: TableChairSpec, rng: np.random.Generator) -> Scene:
    tables, chairs = [], []
    for center in _table_centers(rng, SEPARATION_RANGE):
        table = ObjectState(TABLE_CLASS, center, (1.0, 0.0), RECT_TABLE_HALF, RECT_TABLE_SHAPE)
        tables.append(table)

        if spec.variant == Variant.GROUPING_BY_SHAPE:
            row_shapes = dict(zip((-1, 1), rng.permutation([CHAIR_SHAPE_A, CHAIR_SHAPE_B])))
        else:
            row_shapes = {-1: CHAIR_SHAPE_A, 1: CHAIR_SHAPE_A}

        positions, facings, sides = ideal_chair_slots(table.translation, table.rotation, spec.chairs_per_side)
        for position, facing, side in zip(positions, facings, sides):
            chairs.append(ObjectState.from_angle(CHAIR_CLASS, position, facing, CHAIR_HALF, row_shapes[int(side)]))
    return Scene(tuple(tables + chairs), FloorPlan.square(), CLASS_COUNT)


def _ring_scene(spec: TableChairSpec, rng: np.random.Generator) -> Scene:
    tables, chairs = [], []
    low, high = spec.chairs_per_table_range
    for center in _table_centers(rng, ROUND_SEPARATION_RANGE):
        tables.append(ObjectState(TABLE_CLASS, center, (1.0, 0.0), ROUND_TABLE_HALF, ROUND_TABLE_SHAPE))
        count = int(rng.integers(low, high + 1))
        phase = rng.uniform(0.0, 2 * math.pi / count) if spec.random_phase else 0.0
        for k in range(count):
            angle = phase + 2 * math.pi * k / count
            position = (
                center[0] + spec.chair_radius * math.cos(angle),
                center[1] + spec.chair_radius * math.sin(angle),
            )
            chairs.append(ObjectState.from_angle(CHAIR_CLASS, position, angle + math.pi, CHAIR_HALF, CHAIR_SHAPE_A))
    return Scene(tuple(tables + chairs), FloorPlan.square(), CLASS_COUNT)


def generate_clean(spec: TableChairSpec) -> Scene:
    """Generate a clean scene following the variant's construction rules."""
    rng = np.random.default_rng(spec.seed)
    if spec.variant == Variant.UNIFORM_SPACING:
        return _ring_scene(spec, rng)
    return _row_scene(spec, rng)


def generate_dataset(
    variant: Variant | str,
    count: int,
    seed: int,
    **spec_fields,
) -> tuple[list[Scene], list[int]]:
    """Generate `count` clean scenes with per-scene seeds derived from `seed`."""
    rng = np.random.default_rng(seed)
    seeds = [int(s) for s in rng.integers(0, 2**31 - 1, size=count)]
    scenes = [generate_clean(TableChairSpec(variant=Variant(variant), seed=s, **spec_fields)) for s in seeds]
    logger.info(f"Generated {count} clean {Variant(variant).value} scenes (master seed {seed})")
    return scenes, seeds


def draw_bimodal_noise(
    seed: int | np.random.Generator | None,
    large_probability: float = 0.5,
) -> tuple[NoiseSpec, bool]:
    """Pick the small or large noise mode, then draw kernel stds from its half-normal prior."""
    rng = np.random.default_rng(seed)
    is_large = bool(rng.random() < large_probability)
    std_t, std_r = LARGE_NOISE if is_large else SMALL_NOISE
    noise = NoiseSpec(sigma_t=abs(float(rng.normal(0.0, std_t))), sigma_r=abs(float(rng.normal(0.0, std_r))))
    return noise, is_large


def perturb_bimodal(
    scene: Scene,
    seed: int | np.random.Generator | None,
    large_probability: float = 0.5,
) -> Scene:
    """Perturb with a kernel std drawn from either the small or the large noise mode."""
    rng = np.random.default_rng(seed)
    noise, _ = draw_bimodal_noise(rng, large_probability)
    return perturb(scene, noise, rng)


def _split(scene: Scene) -> tuple[np.ndarray, np.ndarray]:
    classes = scene.class_ids()
    unknown = set(classes.tolist()) - {TABLE_CLASS, CHAIR_CLASS}
    if unknown:
        raise VariantMismatch(f"unexpected classes in Table-Chair scene: {sorted(unknown)}")
    tables = np.flatnonzero(classes == TABLE_CLASS)
    chairs = np.flatnonzero(classes == CHAIR_CLASS)
    if len(tables) == 0:
        raise VariantMismatch("Table-Chair scene has no tables")
    return tables, chairs


def _check_structure(scene: Scene, variant: Variant, tables: np.ndarray, chairs: np.ndarray) -> None:
    table_shapes = set(scene.shape_ids()[tables].tolist())
    if variant == Variant.UNIFORM_SPACING:
        if table_shapes != {ROUND_TABLE_SHAPE}:
            raise VariantMismatch(f"uniform_spacing expects round tables, got shapes {sorted(table_shapes)}")
        return
    if table_shapes != {RECT_TABLE_SHAPE}:
        raise VariantMismatch(f"{variant.value} expects rectangular tables, got shapes {sorted(table_shapes)}")
    if len(chairs) != 6 * len(tables):
        raise VariantMismatch(f"{variant.value} expects 6 chairs per table, got {len(chairs)} for {len(tables)}")
    if variant == Variant.GROUPING_BY_SHAPE:
        chair_shapes = set(scene.shape_ids()[chairs].tolist())
        if not chair_shapes <= {CHAIR_SHAPE_A, CHAIR_SHAPE_B}:
            raise VariantMismatch(f"grouping_by_shape expects chair shapes A/B, got {sorted(chair_shapes)}")


def _grade_rows(scene: Scene, variant: Variant, tables: np.ndarray, chairs: np.ndarray) -> dict:
    t, r = scene.translations(), scene.rotations()
    slot_positions, slot_facings, slot_rows = [], [], []
    for table_pos, table_index in enumerate(tables):
        positions, facings, sides = ideal_chair_slots(t[table_index], r[table_index])
        slot_positions.append(positions)
        slot_facings.append(facings)
        slot_rows.extend((table_pos, int(side)) for side in sides)
    slot_positions = np.concatenate(slot_positions)
    slot_facings = np.concatenate(slot_facings)
    slot_tables = np.array([row[0] for row in slot_rows])

    cost = cdist(t[chairs], slot_positions)
    rows, cols = linear_sum_assignment(cost)
    distances = cost[rows, cols]
    offsets = np.abs(_wrap(scene.angles()[chairs][rows] - slot_facings[cols]))

    grade = {"offsets": offsets}
    if variant == Variant.SYMMETRY_PARALLELISM:
        grade["emd_residual"] = float(distances.sum())
        grade["criteria_ok"] = grade["emd_residual"] < MAX_ROW_EMD
        return grade

    per_table = np.bincount(slot_tables[cols], weights=distances, minlength=len(tables))
    grade["emd_residual"] = float(per_table.max())

    # row membership by nearest slot, so a row can end up with too many or too few chairs
    nearest = np.argmin(cost, axis=1)
    shapes = scene.shape_ids()[chairs]
    members: dict[tuple[int, int], list[int]] = {row: [] for row in slot_rows}
    for chair_pos, slot in enumerate(nearest):
        members[slot_rows[slot]].append(int(shapes[chair_pos]))
    grouping_valid = all(len(m) == 3 and len(set(m)) == 1 for m in members.values())
    grade["grouping_valid"] = grouping_valid
    grade["criteria_ok"] = grade["emd_residual"] < MAX_GROUP_EMD and grouping_valid
    return grade


def _grade_rings(scene: Scene, tables: np.ndarray, chairs: np.ndarray, chair_radius: float) -> dict:
    t = scene.translations()
    centers = t[tables]
    chair_t = t[chairs]
    distances = cdist(chair_t, centers)
    closest = np.argmin(distances, axis=1)
    radius_error = float(np.mean(np.abs(distances[np.arange(len(chairs)), closest] - chair_radius))) if len(chairs) else 0.0

    to_table = centers[closest] - chair_t
    facing = np.arctan2(to_table[:, 1], to_table[:, 0])
    offsets = np.abs(_wrap(scene.angles()[chairs] - facing))

    variances = []
    for table_pos in range(len(tables)):
        around = chair_t[closest == table_pos] - centers[table_pos]
        if len(around) == 0:
            continue
        angles = np.sort(np.arctan2(around[:, 1], around[:, 0]))
        gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))
        variances.append(float(np.var(gaps)))
    spacing_variance = max(variances) if variances else 0.0

    return {
        "offsets": offsets,
        "spacing_variance": spacing_variance,
        "radius_error": radius_error,
        "criteria_ok": spacing_variance < MAX_SPACING_VARIANCE and radius_error < MAX_RADIUS_ERROR,
    }


def evaluate_success(
    initial: Scene,
    final: Scene,
    variant: Variant | str,
    chair_radius: float = CHAIR_RADIUS,
) -> SuccessReport:
    """Grade a rearrangement `final` of the scene `initial`.

    Every variant requires a mean per-object move below 0.5 and every chair facing its
    table within pi/60. Row variants then compare chairs against the ideal rows of the
    rearranged tables; uniform_spacing checks angular spacing and ring radius.
    """
    variant = Variant(variant)
    move = match_scenes(initial, final)
    mean_move = move.total_cost / len(final)

    tables, chairs = _split(final)
    _check_structure(final, variant, tables, chairs)
    if variant in ROW_VARIANTS:
        grade = _grade_rows(final, variant, tables, chairs)
    else:
        grade = _grade_rings(final, tables, chairs, chair_radius)

    offsets = grade.pop("offsets")
    max_offset = float(offsets.max()) if len(offsets) else 0.0
    mean_offset = float(offsets.mean()) if len(offsets) else 0.0
    criteria_ok = grade.pop("criteria_ok")
    success = bool(mean_move < MAX_MEAN_MOVE and max_offset < MAX_ANGULAR_OFFSET and criteria_ok)

    return SuccessReport(
        success=success,
        mean_move_distance=mean_move,
        max_angular_offset=max_offset,
        mean_angular_offset=mean_offset,
        **grade,
    )


def success_rate(reports: Iterable[SuccessReport]) -> float:
    reports = list(reports)
    if not reports:
        return 0.0
    return sum(r.success for r in reports) / len(reports)
