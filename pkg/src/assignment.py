"""Class-wise optimal object correspondence (Earth Mover's Distance on translations)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from src.errors import ClassMultisetMismatch
from src.models import Scene

TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Assignment:
    """A class-preserving bijection from source objects to target objects."""
    mapping: np.ndarray  # mapping[i] = target index matched to source object i
    costs: np.ndarray  # per-source-object translation distance
    total_cost: float


def _lexicographic_assignment(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost assignment; among optimal ones, the lexicographically smallest.

    Rows are fixed one at a time to the smallest column that still admits an optimal
    completion.
    """
    n = cost.shape[0]
    mapping = np.empty(n, dtype=np.int64)
    available = list(range(n))
    for i in range(n):
        totals = []
        for j in available:
            rest_cols = [c for c in available if c != j]
            rest = 0.0
            if rest_cols:
                sub = cost[np.ix_(range(i + 1, n), rest_cols)]
                r, c = linear_sum_assignment(sub)
                rest = float(sub[r, c].sum())
            totals.append(cost[i, j] + rest)
        best = min(totals)
        tolerance = TIE_TOLERANCE * max(1.0, best)
        choice = next(j for j, total in zip(available, totals) if total <= best + tolerance)
        mapping[i] = choice
        available.remove(choice)
    return mapping


def match_scenes(source: Scene, target: Scene) -> Assignment:
    """Match every source object to a target object of the same class.

    The cost of a pair is the Euclidean distance between translations; each class group
    is solved independently with the Hungarian method.
    """
    if source.class_counts() != target.class_counts():
        raise ClassMultisetMismatch(
            f"per-class counts differ: {dict(source.class_counts())} vs {dict(target.class_counts())}"
        )

    src_classes, tgt_classes = source.class_ids(), target.class_ids()
    src_t, tgt_t = source.translations(), target.translations()
    mapping = np.empty(len(source), dtype=np.int64)

    for class_id in sorted(source.class_counts()):
        src_idx = np.flatnonzero(src_classes == class_id)
        tgt_idx = np.flatnonzero(tgt_classes == class_id)
        cost = cdist(src_t[src_idx], tgt_t[tgt_idx])
        local = _lexicographic_assignment(cost)
        mapping[src_idx] = tgt_idx[local]

    costs = np.linalg.norm(src_t - tgt_t[mapping], axis=1)
    return Assignment(mapping=mapping, costs=costs, total_cost=float(costs.sum()))


def emd_to_gt(pred: Scene, gt: Scene) -> float:
    """Mean per-object transport distance between a prediction and its ground truth."""
    return match_scenes(pred, gt).total_cost / len(pred)
