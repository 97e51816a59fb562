"""Scene domain model: furniture objects, floor plans, scenes and noise levels."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Any, Iterable, Sequence

import numpy as np
from shapely.geometry import Polygon
from shapely.geometry.polygon import orient

from src.errors import InvalidScene

ROTATION_TOLERANCE = 1e-6


def _pair(values: Iterable[Any], name: str) -> tuple[float, float]:
    try:
        pair = tuple(float(v) for v in values)
    except (TypeError, ValueError) as e:
        raise InvalidScene(f"{name} must be a pair of numbers, got {values!r}") from e
    if len(pair) != 2:
        raise InvalidScene(f"{name} must have 2 components, got {len(pair)}")
    if not all(math.isfinite(v) for v in pair):
        raise InvalidScene(f"{name} must be finite, got {pair}")
    return pair  # type: ignore[return-value]


@dataclass(frozen=True)
class ObjectState:
    """One piece of furniture in a scene."""
    class_id: int
    translation: tuple[float, float]  # normalized room units
    rotation: tuple[float, float]  # (cos θ, sin θ)
    bbox: tuple[float, float]  # half-extents, normalized units
    shape_id: int = 0  # geometry type, stands in for a learned shape descriptor

    def __post_init__(self) -> None:
        object.__setattr__(self, "class_id", int(self.class_id))
        object.__setattr__(self, "shape_id", int(self.shape_id))
        object.__setattr__(self, "translation", _pair(self.translation, "translation"))
        object.__setattr__(self, "rotation", _pair(self.rotation, "rotation"))
        object.__setattr__(self, "bbox", _pair(self.bbox, "bbox"))

        if self.class_id < 0:
            raise InvalidScene(f"class_id must be non-negative, got {self.class_id}")
        if self.shape_id < 0:
            raise InvalidScene(f"shape_id must be non-negative, got {self.shape_id}")
        norm = math.hypot(*self.rotation)
        if abs(norm - 1.0) > ROTATION_TOLERANCE:
            raise InvalidScene(f"rotation must be a unit vector, got norm {norm}")
        if min(self.bbox) <= 0:
            raise InvalidScene(f"bbox half-extents must be positive, got {self.bbox}")

    @property
    def angle(self) -> float:
        return math.atan2(self.rotation[1], self.rotation[0])

    @classmethod
    def from_angle(
        cls,
        class_id: int,
        translation: Sequence[float],
        angle: float,
        bbox: Sequence[float],
        shape_id: int = 0,
    ) -> ObjectState:
        return cls(
            class_id=class_id,
            translation=tuple(translation),
            rotation=(math.cos(angle), math.sin(angle)),
            bbox=tuple(bbox),
            shape_id=shape_id,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "class": self.class_id,
            "t": list(self.translation),
            "r": list(self.rotation),
            "b": list(self.bbox),
            "shape": self.shape_id,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ObjectState:
        try:
            return cls(
                class_id=data["class"],
                translation=data["t"],
                rotation=data["r"],
                bbox=data["b"],
                shape_id=data.get("shape", 0),
            )
        except KeyError as e:
            raise InvalidScene(f"object is missing field {e}") from e
        except InvalidScene:
            raise
        except (TypeError, ValueError) as e:
            raise InvalidScene(f"malformed object {data!r}: {e}") from e


@dataclass(frozen=True)
class FloorPlan:
    """Room boundary as a simple counter-clockwise polygon."""
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        vertices = tuple(_pair(v, "floor vertex") for v in self.vertices)
        object.__setattr__(self, "vertices", vertices)

        if len(vertices) < 3:
            raise InvalidScene(f"floor plan needs at least 3 vertices, got {len(vertices)}")
        polygon = Polygon(vertices)
        if not polygon.is_valid or polygon.area <= 0:
            raise InvalidScene("floor plan polygon must be simple with positive area")
        if not polygon.exterior.is_ccw:
            raise InvalidScene("floor plan polygon must be counter-clockwise")

    @classmethod
    def from_points(cls, points: Iterable[Sequence[float]]) -> FloorPlan:
        """Build a floor plan from any simple polygon, fixing its winding order."""
        polygon = orient(Polygon([tuple(p) for p in points]), sign=1.0)
        return cls(tuple(polygon.exterior.coords)[:-1])

    @classmethod
    def square(cls, half_size: float = 1.0) -> FloorPlan:
        h = float(half_size)
        return cls(((-h, -h), (h, -h), (h, h), (-h, h)))

    @property
    def polygon(self) -> Polygon:
        return Polygon(self.vertices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=np.float64)

    def to_list(self) -> list[list[float]]:
        return [list(v) for v in self.vertices]


@dataclass(frozen=True)
class Scene:
    """An unordered set of objects inside a floor plan."""
    objects: tuple[ObjectState, ...]
    floor: FloorPlan
    class_count: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "class_count", int(self.class_count))

        if not self.objects:
            raise InvalidScene("scene must contain at least one object")
        for obj in self.objects:
            if obj.class_id >= self.class_count:
                raise InvalidScene(
                    f"class_id {obj.class_id} out of range for class_count {self.class_count}"
                )

    def __len__(self) -> int:
        return len(self.objects)

    def translations(self) -> np.ndarray:
        return np.array([o.translation for o in self.objects], dtype=np.float64)

    def rotations(self) -> np.ndarray:
        return np.array([o.rotation for o in self.objects], dtype=np.float64)

    def angles(self) -> np.ndarray:
        rot = self.rotations()
        return np.arctan2(rot[:, 1], rot[:, 0])

    def bboxes(self) -> np.ndarray:
        return np.array([o.bbox for o in self.objects], dtype=np.float64)

    def class_ids(self) -> np.ndarray:
        return np.array([o.class_id for o in self.objects], dtype=np.int64)

    def shape_ids(self) -> np.ndarray:
        return np.array([o.shape_id for o in self.objects], dtype=np.int64)

    def class_counts(self) -> Counter:
        return Counter(o.class_id for o in self.objects)

    def with_poses(self, translations: np.ndarray, rotations: np.ndarray) -> Scene:
        """Return a copy with new poses; every other attribute is kept."""
        translations = np.asarray(translations, dtype=np.float64)
        rotations = np.asarray(rotations, dtype=np.float64)
        if translations.shape != (len(self), 2) or rotations.shape != (len(self), 2):
            raise InvalidScene(
                f"pose arrays must be ({len(self)}, 2), got {translations.shape} and {rotations.shape}"
            )
        objects = tuple(
            replace(obj, translation=tuple(t), rotation=tuple(r))
            for obj, t, r in zip(self.objects, translations, rotations)
        )
        return replace(self, objects=objects)

    def permuted(self, order: Sequence[int]) -> Scene:
        return replace(self, objects=tuple(self.objects[i] for i in order))

    def to_dict(self) -> dict[str, Any]:
        return {
            "class_count": self.class_count,
            "floor": self.floor.to_list(),
            "objects": [o.to_dict() for o in self.objects],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Scene:
        if not isinstance(data, dict):
            raise InvalidScene(f"scene must be a JSON object, got {type(data).__name__}")
        try:
            return cls(
                objects=tuple(ObjectState.from_dict(o) for o in data["objects"]),
                floor=FloorPlan(tuple(tuple(v) for v in data["floor"])),
                class_count=data["class_count"],
            )
        except KeyError as e:
            raise InvalidScene(f"scene is missing field {e}") from e
        except InvalidScene:
            raise
        except (TypeError, ValueError) as e:
            raise InvalidScene(f"malformed scene: {e}") from e

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, data: str) -> Scene:
        return cls.from_dict(json.loads(data))


@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviations of the Gaussian perturbation kernel."""
    sigma_t: float  # translation, normalized units
    sigma_r: float  # rotation angle, radians

    def __post_init__(self) -> None:
        for name in ("sigma_t", "sigma_r"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise InvalidScene(f"{name} must be a finite non-negative number, got {value}")
            object.__setattr__(self, name, value)
