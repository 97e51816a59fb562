"""Regularity scoring by small translation-invariant integer relations between coordinates."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import Any, Iterable, Sequence

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from src.errors import ConfigError, DegenerateInput, TooFewObjects
from src.models import NoiseSpec, Scene
from src.perturb import perturb

logger = logging.getLogger(__name__)

GAMMA = math.sqrt(4.0 / 3.0)
EXACT_TOLERANCE = 1e-14
MAX_ENTRY = 2**40
NEIGHBOUR_COUNT = 4


class Axis(int, Enum):
    X = 0
    Y = 1


@dataclass(frozen=True)
class IntegerRelation:
    coefficients: tuple[int, ...]
    residual: float  # |sum(a_i * t_i)|, unshifted when the relation holds there
    subset: tuple[int, ...] = ()
    axis: Axis | None = None


@dataclass(frozen=True)
class RelationQuery:
    """How relations are searched: subset size, coefficient bound eta, precision epsilon."""
    n: int = 2
    eta: int = 3
    epsilon: float = 0.01
    samples_per_scene: int = 100
    invariance_trials: int = 10
    max_iterations: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n not in (2, 3):
            raise ConfigError(f"subset size n must be 2 or 3, got {self.n}")
        if self.eta < 2:
            raise ConfigError(f"eta must be >= 2, got {self.eta}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.samples_per_scene < 1 or self.invariance_trials < 1 or self.max_iterations < 1:
            raise ConfigError("samples_per_scene, invariance_trials and max_iterations must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RelationQuery:
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown relation query keys: {sorted(unknown)}")
        return cls(**data)


def _nint(value: float) -> int:
    return math.floor(value + 0.5)


def _reduce(H: np.ndarray, y: np.ndarray, A: np.ndarray, B: np.ndarray, rows: Iterable[int], last_col: int) -> None:
    """Hermite-reduce the given rows of H, updating y, A and B to match."""
    for i in rows:
        for j in range(min(i - 1, last_col), -1, -1):
            if H[j, j] == 0:
                continue
            t = _nint(H[i, j] / H[j, j])
            if t == 0:
                continue
            y[j] += t * y[i]
            H[i, : j + 1] -= t * H[j, : j + 1]
            A[i, :] -= t * A[j, :]
            B[:, j] += t * B[:, i]


def _accepted(
    B: np.ndarray,
    values: np.ndarray,
    epsilon: float,
    max_coefficient: int | None,
    full_support: bool,
) -> np.ndarray | None:
    for column in B.T:
        if not column.any():
            continue
        if max_coefficient is not None and np.abs(column).max() > max_coefficient:
            continue
        if full_support and not column.all():
            continue
        if abs(float(column @ values)) < epsilon:
            return column
    return None


def pslq(
    values: Sequence[float],
    epsilon: float = 0.01,
    max_iterations: int = 200,
    max_coefficient: int | None = None,
    full_support: bool = False,
) -> tuple[int, ...] | None:
    """Find integers a (not all zero) with |sum(a_i * v_i)| < epsilon, or None.

    Double-precision PSLQ. Every basis column is tested against the raw values after
    each iteration; columns with an entry above `max_coefficient`, or with a zero entry
    when `full_support` is set, are skipped. The search gives up after `max_iterations`,
    when the lower bound on any relation's norm leaves the coefficient range, or when an
    exact relation turns up that the filters reject. With `full_support`, an exact
    relation missing one value is first extended through that value's pair relation.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or len(x) < 2:
        raise DegenerateInput(f"pslq needs a vector of at least 2 values, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DegenerateInput("pslq values must be finite")
    if not np.any(x):
        raise DegenerateInput("pslq values are all zero")

    n = len(x)
    norm = float(np.linalg.norm(x))
    y = x / norm
    s = np.sqrt(np.cumsum((y * y)[::-1])[::-1])

    H = np.zeros((n, n - 1))
    for i in range(n):
        for j in range(min(i, n - 2) + 1):
            if i == j:
                H[i, j] = s[i + 1] / s[i] if s[i] > 0 else 0.0
            elif s[j] > 0 and s[j + 1] > 0:
                H[i, j] = -y[i] * y[j] / (s[j] * s[j + 1])
    A = np.eye(n, dtype=np.int64)
    B = np.eye(n, dtype=np.int64)
    _reduce(H, y, A, B, range(1, n), n - 2)

    powers = GAMMA ** np.arange(1, n)
    for _ in range(max_iterations + 1):
        relation = _accepted(B, x, epsilon, max_coefficient, full_support)
        if relation is not None:
            return tuple(int(a) for a in relation)
        exact = np.flatnonzero(np.abs(y) < EXACT_TOLERANCE)
        if len(exact):
            if full_support:
                return _complete_support(x, B[:, exact[0]], epsilon, max_iterations, max_coefficient)
            return None
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(y))) or np.abs(B).max() > MAX_ENTRY:
            logger.warning("PSLQ state became non-finite or overflowed; giving up")
            return None
        diagonal = np.abs(np.diag(H))
        if max_coefficient is not None and diagonal.max() > 0:
            if 1.0 / diagonal.max() > max_coefficient * math.sqrt(n):
                return None

        m = int(np.argmax(powers * diagonal))
        y[[m, m + 1]] = y[[m + 1, m]]
        H[[m, m + 1], :] = H[[m + 1, m], :]
        A[[m, m + 1], :] = A[[m + 1, m], :]
        B[:, [m, m + 1]] = B[:, [m + 1, m]]
        if m < n - 2:
            t0 = math.hypot(H[m, m], H[m, m + 1])
            if t0 == 0:
                return None
            t1, t2 = H[m, m] / t0, H[m, m + 1] / t0
            for i in range(m, n):
                t3, t4 = H[i, m], H[i, m + 1]
                H[i, m] = t1 * t3 + t2 * t4
                H[i, m + 1] = -t2 * t3 + t1 * t4
        _reduce(H, y, A, B, range(m + 1, n), m + 1)
    return None


def _complete_support(
    x: np.ndarray,
    partial: np.ndarray,
    epsilon: float,
    max_iterations: int,
    max_coefficient: int | None,
) -> tuple[int, ...] | None:
    """Extend an exact relation with one zero coefficient to a full-support one.

    The missing value is paired with one value of the relation's support; a relation
    of that pair is combined with `partial` using small integer multipliers.
    """
    zeros = np.flatnonzero(partial == 0)
    if len(zeros) != 1:
        return None
    k = int(zeros[0])
    i = int(np.flatnonzero(partial)[0])
    try:
        pair = pslq(x[[i, k]], epsilon, max_iterations, max_coefficient, full_support=True)
    except DegenerateInput:
        return None
    if pair is None:
        return None
    other = np.zeros_like(partial)
    other[[i, k]] = pair

    reach = max_coefficient if max_coefficient is not None else 3
    for p in range(1, reach + 1):
        for q in sorted(range(-reach, reach + 1), key=abs):
            if q == 0:
                continue
            candidate = p * partial + q * other
            if not candidate.all():
                continue
            if max_coefficient is not None and np.abs(candidate).max() > max_coefficient:
                continue
            if abs(float(candidate @ x)) < epsilon:
                return tuple(int(a) for a in candidate)
    return None


def _canonical(coefficients: Sequence[int]) -> tuple[int, ...]:
    """Fix the sign so the first non-zero coefficient is positive."""
    first = next(a for a in coefficients if a != 0)
    return tuple(int(a) if first > 0 else -int(a) for a in coefficients)


def find_relation(
    values: Sequence[float],
    query: RelationQuery,
    seed: int | np.random.Generator | None = None,
) -> IntegerRelation | None:
    """A bounded relation that PSLQ finds after every random global shift of `values`.

    Each of `query.invariance_trials` trials adds one shift mu ~ U(-1, 1) to all values
    and must yield a relation with 0 < |a_i| < eta. The first relation that also holds
    on the unshifted values is returned; failing that, the first trial's relation with
    its residual on the shifted values it was found for.
    """
    x = np.asarray(values, dtype=np.float64)
    if len(x) != query.n:
        raise ValueError(f"expected {query.n} values, got {len(x)}")
    rng = np.random.default_rng(query.seed if seed is None else seed)

    found: list[tuple[tuple[int, ...], float]] = []
    for _ in range(query.invariance_trials):
        shifted = x + rng.uniform(-1.0, 1.0)
        try:
            relation = pslq(shifted, query.epsilon, query.max_iterations, query.eta - 1, full_support=True)
        except DegenerateInput:
            relation = None
        if relation is None:
            return None
        found.append((relation, abs(float(np.dot(relation, shifted)))))

    for relation, _ in found:
        residual = abs(float(np.dot(relation, x)))
        if residual < query.epsilon:
            return IntegerRelation(coefficients=_canonical(relation), residual=residual)
    relation, residual = found[0]
    return IntegerRelation(coefficients=_canonical(relation), residual=residual)


def relation_exists(
    values: Sequence[float],
    query: RelationQuery,
    seed: int | np.random.Generator | None = None,
) -> bool:
    return find_relation(values, query, seed) is not None


def _sample_subsets(translations: np.ndarray, query: RelationQuery, rng: np.random.Generator) -> list[np.ndarray]:
    count = len(translations)
    if query.n == 2:
        return [rng.choice(count, size=2, replace=False) for _ in range(query.samples_per_scene)]

    k = min(NEIGHBOUR_COUNT, count - 1)
    _, nearest = cKDTree(translations).query(translations, k=k + 1)
    neighbours = [[j for j in row if j != i][:k] for i, row in enumerate(np.atleast_2d(nearest))]
    subsets = []
    for sample in range(query.samples_per_scene):
        i = sample % count
        pair = rng.choice(neighbours[i], size=2, replace=False)
        subsets.append(np.array([i, *pair]))
    return subsets


def scene_relations(
    scene: Scene,
    query: RelationQuery,
    axes: Sequence[Axis] = tuple(Axis),
) -> tuple[int, list[IntegerRelation]]:
    """(number of tests, relations found) over sampled subsets and both axes."""
    if len(scene) < query.n:
        raise TooFewObjects(f"scene has {len(scene)} objects, subsets need {query.n}")
    rng = np.random.default_rng(query.seed)
    translations = scene.translations()

    tests = 0
    found = []
    for subset in _sample_subsets(translations, query, rng):
        for axis in axes:
            tests += 1
            relation = find_relation(translations[subset, axis.value], query, rng)
            if relation is not None:
                found.append(
                    IntegerRelation(relation.coefficients, relation.residual, tuple(int(i) for i in subset), axis)
                )
    return tests, found


def scene_relation_rate(scene: Scene, query: RelationQuery, axes: Sequence[Axis] = tuple(Axis)) -> float:
    """Fraction of sampled (subset, axis) tests whose coordinates admit a relation."""
    tests, found = scene_relations(scene, query, axes)
    return len(found) / tests


def relation_rate_curve(
    scenes: Sequence[Scene],
    noise_levels: Sequence[float],
    query: RelationQuery,
    seed: int | np.random.Generator | None = 0,
) -> pd.DataFrame:
    """Mean relation rate of `scenes` after translation noise at each level."""
    rng = np.random.default_rng(seed)
    rows = []
    for sigma in noise_levels:
        noise = NoiseSpec(sigma_t=float(sigma), sigma_r=0.0)
        rates = [scene_relation_rate(perturb(scene, noise, rng), query) for scene in scenes]
        rows.append({"noise_level": float(sigma), "rate": float(np.mean(rates))})
        logger.info(f"Relation rate at noise {sigma}: {rows[-1]['rate']:.4f}")
    return pd.DataFrame(rows, columns=["noise_level", "rate"])


def overall_relation_score(rates: pd.DataFrame) -> pd.Series:
    """Average of per-setting rates, each normalized by its best value across rows.

    `rates` has one row per method and one column per (n, eta) setting.
    """
    best = rates.max(axis=0).replace(0.0, 1.0)
    return (rates / best).mean(axis=1)
