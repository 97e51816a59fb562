"""Scene denoiser: attribute tokens + floor token -> transformer encoder -> absolute poses."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from typing import Any

import numpy as np

from src.autograd import Tensor, concat, init_linear, linear, parameter, parameter_count
from src.errors import ClassOutOfRange, ConfigError, UntrainedParams
from src.floor import sample_contour
from src.models import FloorPlan, ObjectState, Scene

logger = logging.getLogger(__name__)

ROTATION_NORM_FLOOR = 1e-12
OBJECT_BIT = 0.0
FLOOR_BIT = 1.0


@dataclass(frozen=True)
class DenoiserConfig:
    """Architecture hyper-parameters; the full-scale defaults use 512-wide tokens."""
    class_count: int
    shape_count: int = 1
    token_dim: int = 512
    head_count: int = 8
    layer_count: int = 4
    mlp_hidden_dim: int = 2048
    pe_frequencies: int = 32
    pe_max_frequency: float = 128.0
    attribute_dim: int = 128
    floor_point_dims: tuple[int, ...] = (64, 64, 512)
    floor_sample_count: int = 250
    floor_seed: int = 0
    head_hidden_dim: int = 256
    layer_norm: bool = True  # pre-norm encoder blocks
    negative_slope: float = 0.01

    def __post_init__(self) -> None:
        object.__setattr__(self, "floor_point_dims", tuple(int(d) for d in self.floor_point_dims))
        positive = (
            "class_count", "shape_count", "token_dim", "head_count", "layer_count",
            "mlp_hidden_dim", "pe_frequencies", "attribute_dim", "floor_sample_count",
            "head_hidden_dim",
        )
        for name in positive:
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.token_dim < 2:
            raise ConfigError(f"token_dim must leave room for the type bit, got {self.token_dim}")
        if self.token_dim % self.head_count:
            raise ConfigError(f"token_dim {self.token_dim} is not divisible by head_count {self.head_count}")
        if not self.floor_point_dims or min(self.floor_point_dims) < 1:
            raise ConfigError(f"floor_point_dims must be positive, got {self.floor_point_dims}")
        if self.pe_max_frequency <= 0:
            raise ConfigError(f"pe_max_frequency must be positive, got {self.pe_max_frequency}")

    @classmethod
    def desk(cls, class_count: int, shape_count: int = 1, **overrides: Any) -> DenoiserConfig:
        """CPU-sized preset: 128-wide tokens, 4 heads, 2 encoder layers."""
        settings = dict(token_dim=128, head_count=4, layer_count=2, mlp_hidden_dim=256)
        settings.update(overrides)
        return cls(class_count=class_count, shape_count=shape_count, **settings)

    @property
    def head_dim(self) -> int:
        return self.token_dim // self.head_count

    @property
    def attribute_width(self) -> int:
        """Width of the concatenated per-object attribute vector (640 at full scale)."""
        pe = 2 * self.pe_frequencies
        return 2 * pe + self.attribute_dim + 2 * pe + 2 * self.attribute_dim

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["floor_point_dims"] = list(self.floor_point_dims)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DenoiserConfig:
        data = dict(data)
        desk_preset = bool(data.pop("desk_preset", False))
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown denoiser config keys: {sorted(unknown)}")
        if "class_count" not in data:
            raise ConfigError("denoiser config needs class_count")
        if desk_preset:
            return cls.desk(**data)
        return cls(**data)


@dataclass(frozen=True)
class TransformPrediction:
    """Predicted absolute pose per object, rotations on the unit circle."""
    translations: np.ndarray  # (n, 2)
    rotations: np.ndarray  # (n, 2)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.translations, self.rotations], axis=1)

    def apply_to(self, scene: Scene) -> Scene:
        return scene.with_poses(self.translations, self.rotations)


def pe_frequency_ladder(count: int = 32, max_frequency: float = 128.0) -> np.ndarray:
    """Geometric frequencies from 1 up to `max_frequency` inclusive."""
    if count == 1:
        return np.ones(1)
    return max_frequency ** (np.arange(count) / (count - 1))


def positional_encode(x, frequencies: int = 32, max_frequency: float = 128.0) -> np.ndarray:
    """Sinusoidal encoding: sin block then cos block, by ascending frequency.

    A scalar maps to a (2 * frequencies,) vector; an array gains a trailing axis.
    """
    x = np.asarray(x, dtype=np.float64)
    phase = x[..., None] * pe_frequency_ladder(frequencies, max_frequency)
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=-1)


# -- parameters ----------------------------------------------------------------------


def _layout(config: DenoiserConfig) -> list[tuple[str, str, int, int]]:
    """(prefix, kind, fan_in, fan_out) for every parameter block."""
    a = config.attribute_dim
    d = config.token_dim
    pe = 2 * config.pe_frequencies
    blocks = [
        ("object.angle", "linear", pe, a),
        ("object.class.0", "linear", config.class_count, a),
        ("object.class.1", "linear", a, a),
        ("object.shape_embedding", "embedding", config.shape_count, a),
        ("object.shape.0", "linear", a, a),
        ("object.shape.1", "linear", a, a),
        ("object.fuse.0", "linear", config.attribute_width, d),
        ("object.fuse.1", "linear", d, d - 1),
    ]
    width = 4
    for i, out in enumerate(config.floor_point_dims):
        blocks.append((f"floor.point.{i}", "linear", width, out))
        width = out
    blocks.append(("floor.out", "linear", width, d - 1))

    for layer in range(config.layer_count):
        p = f"encoder.{layer}"
        if config.layer_norm:
            blocks.append((f"{p}.norm1", "norm", d, d))
        blocks += [
            (f"{p}.query", "linear", d, d),
            (f"{p}.key", "linear", d, d),
            (f"{p}.value", "linear", d, d),
            (f"{p}.out", "linear", d, d),
        ]
        if config.layer_norm:
            blocks.append((f"{p}.norm2", "norm", d, d))
        blocks += [
            (f"{p}.mlp.0", "linear", d, config.mlp_hidden_dim),
            (f"{p}.mlp.1", "linear", config.mlp_hidden_dim, d),
        ]
    if config.layer_norm:
        blocks.append(("encoder.norm", "norm", d, d))
    blocks += [
        ("head.0", "linear", d, config.head_hidden_dim),
        ("head.1", "linear", config.head_hidden_dim, 4),
    ]
    return blocks


def param_shapes(config: DenoiserConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for prefix, kind, fan_in, fan_out in _layout(config):
        if kind == "linear":
            shapes[f"{prefix}.weight"] = (fan_in, fan_out)
            shapes[f"{prefix}.bias"] = (fan_out,)
        elif kind == "embedding":
            shapes[f"{prefix}"] = (fan_in, fan_out)
        else:
            shapes[f"{prefix}.gain"] = (fan_out,)
            shapes[f"{prefix}.bias"] = (fan_out,)
    return shapes


def init_params(config: DenoiserConfig, seed: int | np.random.Generator | None = 0) -> dict[str, Tensor]:
    """Fresh parameters, uniform in +-1/sqrt(fan_in); layer norms start as identity."""
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for prefix, kind, fan_in, fan_out in _layout(config):
        if kind == "linear":
            init_linear(params, prefix, fan_in, fan_out, rng)
        elif kind == "embedding":
            bound = 1.0 / math.sqrt(fan_in)
            params[prefix] = parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        else:
            params[f"{prefix}.gain"] = parameter(np.ones(fan_out))
            params[f"{prefix}.bias"] = parameter(np.zeros(fan_out))
    logger.debug(f"Initialized {len(params)} parameter tensors ({parameter_count(params.values())} values)")
    return params


def check_params(params: dict[str, Tensor], config: DenoiserConfig) -> None:
    """Raise UntrainedParams unless `params` has exactly the tensors `config` implies."""
    expected = param_shapes(config)
    missing = sorted(set(expected) - set(params))
    extra = sorted(set(params) - set(expected))
    if missing or extra:
        raise UntrainedParams(f"parameter names do not match config (missing {missing[:3]}, unexpected {extra[:3]})")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise UntrainedParams(f"{name} has shape {params[name].shape}, config implies {shape}")


# -- encoders --------------------------------------------------------------------------


def _mlp2(x: Tensor, params: dict[str, Tensor], prefix: str, slope: float) -> Tensor:
    return linear(linear(x, params, f"{prefix}.0").leaky_relu(slope), params, f"{prefix}.1")


def _append_bit(features: Tensor, bit: float) -> Tensor:
    return concat([features, Tensor(np.full((features.shape[0], 1), bit))], axis=1)


def _encode_attributes(
    translations: np.ndarray,
    rotations: np.ndarray,
    bboxes: np.ndarray,
    class_ids: np.ndarray,
    shape_ids: np.ndarray,
    params: dict[str, Tensor],
    config: DenoiserConfig,
) -> Tensor:
    if class_ids.min() < 0 or class_ids.max() >= config.class_count:
        raise ClassOutOfRange(f"class ids {sorted(set(class_ids.tolist()))} outside [0, {config.class_count})")
    if shape_ids.min() < 0 or shape_ids.max() >= config.shape_count:
        raise ClassOutOfRange(f"shape ids {sorted(set(shape_ids.tolist()))} outside [0, {config.shape_count})")

    n = len(class_ids)
    freq, max_freq = config.pe_frequencies, config.pe_max_frequency
    slope = config.negative_slope

    pe_t = Tensor(positional_encode(translations, freq, max_freq).reshape(n, -1))
    angles = np.arctan2(rotations[:, 1], rotations[:, 0])
    pe_angle = linear(Tensor(positional_encode(angles, freq, max_freq)), params, "object.angle")
    pe_b = Tensor(positional_encode(bboxes, freq, max_freq).reshape(n, -1))
    one_hot = Tensor(np.eye(config.class_count)[class_ids])
    class_features = _mlp2(one_hot, params, "object.class", slope)
    shape_features = _mlp2(params["object.shape_embedding"][shape_ids], params, "object.shape", slope)

    attributes = concat([pe_t, pe_angle, pe_b, class_features, shape_features], axis=1)
    return _append_bit(_mlp2(attributes, params, "object.fuse", slope), OBJECT_BIT)


def encode_objects(scene: Scene, params: dict[str, Tensor], config: DenoiserConfig) -> Tensor:
    """(n, token_dim) object tokens in scene order."""
    return _encode_attributes(
        scene.translations(), scene.rotations(), scene.bboxes(),
        scene.class_ids(), scene.shape_ids(), params, config,
    )


def encode_object(obj: ObjectState, params: dict[str, Tensor], config: DenoiserConfig) -> Tensor:
    """Token of a single object, shape (token_dim,)."""
    token = _encode_attributes(
        np.array([obj.translation]), np.array([obj.rotation]), np.array([obj.bbox]),
        np.array([obj.class_id]), np.array([obj.shape_id]), params, config,
    )
    return token[0]


@lru_cache(maxsize=256)
def _contour(floor: FloorPlan, count: int, seed: int) -> np.ndarray:
    return sample_contour(floor, count, seed)


def encode_floor(floor: FloorPlan, params: dict[str, Tensor], config: DenoiserConfig) -> Tensor:
    """(1, token_dim) floor token: per-point MLP over contour samples, max-pooled."""
    x = Tensor(_contour(floor, config.floor_sample_count, config.floor_seed))
    for i in range(len(config.floor_point_dims)):
        x = linear(x, params, f"floor.point.{i}").leaky_relu(config.negative_slope)
    pooled = x.max(axis=0, keepdims=True)
    return _append_bit(linear(pooled, params, "floor.out"), FLOOR_BIT)


def tokenize(scene: Scene, params: dict[str, Tensor], config: DenoiserConfig) -> Tensor:
    """(n + 1, token_dim) token matrix; the floor token is the last row."""
    return concat([encode_objects(scene, params, config), encode_floor(scene.floor, params, config)], axis=0)


# -- transformer -------------------------------------------------------------------------


def _norm(x: Tensor, params: dict[str, Tensor], prefix: str, config: DenoiserConfig) -> Tensor:
    if not config.layer_norm:
        return x
    return x.layer_norm() * params[f"{prefix}.gain"] + params[f"{prefix}.bias"]


def _attention(h: Tensor, params: dict[str, Tensor], prefix: str, config: DenoiserConfig) -> Tensor:
    q = linear(h, params, f"{prefix}.query")
    k = linear(h, params, f"{prefix}.key")
    v = linear(h, params, f"{prefix}.value")
    d = config.head_dim
    scale = 1.0 / math.sqrt(d)
    heads = []
    for i in range(config.head_count):
        cols = slice(i * d, (i + 1) * d)
        weights = ((q[:, cols] @ k[:, cols].T) * scale).softmax()
        heads.append(weights @ v[:, cols])
    return linear(concat(heads, axis=1), params, f"{prefix}.out")


def transformer(tokens: Tensor, params: dict[str, Tensor], config: DenoiserConfig) -> Tensor:
    """Pre-norm encoder blocks with residual attention and feed-forward sub-layers."""
    x = tokens
    for layer in range(config.layer_count):
        p = f"encoder.{layer}"
        x = x + _attention(_norm(x, params, f"{p}.norm1", config), params, p, config)
        hidden = linear(_norm(x, params, f"{p}.norm2", config), params, f"{p}.mlp.0")
        x = x + linear(hidden.leaky_relu(config.negative_slope), params, f"{p}.mlp.1")
    return _norm(x, params, "encoder.norm", config)


def predict_from_tokens(tokens: Tensor, params: dict[str, Tensor], config: DenoiserConfig) -> Tensor:
    """Run the encoder and output heads; drops the floor token, returns (n, 4)."""
    encoded = transformer(tokens, params, config)
    objects = encoded[: tokens.shape[0] - 1]
    out = _mlp2(objects, params, "head", config.negative_slope)
    rotation = out[:, 2:4]
    rotation = rotation / rotation.l2_norm(axis=1, keepdims=True).maximum(ROTATION_NORM_FLOOR)
    return concat([out[:, 0:2], rotation], axis=1)


def canonical_order(scene: Scene) -> np.ndarray:
    """Object order sorted by every input attribute; equal only for identical objects."""
    keys = np.column_stack([
        scene.class_ids(), scene.shape_ids(), scene.translations(), scene.rotations(), scene.bboxes(),
    ])
    return np.lexsort(keys.T[::-1])


def forward_tensor(scene: Scene, params: dict[str, Tensor], config: DenoiserConfig) -> Tensor:
    """Differentiable (n, 4) prediction (tx, ty, cos, sin) aligned with scene order.

    The network always sees the objects in canonical order, so every per-object
    reduction runs in the same sequence whatever order the scene lists them in and
    a permuted scene gives exactly the permuted prediction.
    """
    order = canonical_order(scene)
    out = predict_from_tokens(tokenize(scene.permuted(order), params, config), params, config)
    return out[np.argsort(order)]


def forward(scene: Scene, params: dict[str, Tensor], config: DenoiserConfig) -> TransformPrediction:
    out = forward_tensor(scene, params, config).data
    return TransformPrediction(translations=out[:, 0:2].copy(), rotations=out[:, 2:4].copy())
