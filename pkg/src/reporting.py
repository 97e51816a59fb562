"""End-of-run reporting: collected warnings, error lines and per-scene metric tables."""

from __future__ import annotations

import logging
import sys
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np
import pandas as pd

from src.assignment import emd_to_gt
from src.floor import boundary_violation_fraction, floor_margin, respects_floor
from src.integer_relations import RelationQuery, scene_relation_rate
from src.models import Scene
from src.table_chair import Variant, evaluate_success

logger = logging.getLogger(__name__)

EVAL_COLUMNS = [
    "scene", "success", "distance_moved", "emd_to_gt",
    "inside_fraction", "respects_floor", "relation_rate_n2", "relation_rate_n3",
]


class WarningCollector(logging.Handler):
    """Keeps the WARNING+ records of one command for the summary printed after it."""

    def __init__(self, command: str = "run") -> None:
        super().__init__(level=logging.WARNING)
        self.command = command
        self.records: list[logging.LogRecord] = []

    def emit(self, record: logging.LogRecord) -> None:
        self.records.append(record)

    def messages(self) -> list[str]:
        # logger names lose the package prefix: "storage: skipping bad.json"
        return [f"{r.name.rsplit('.', 1)[-1]}: {r.getMessage()}" for r in self.records]


def report_warnings(collector: WarningCollector, stream: TextIO | None = None) -> None:
    """Print how many problems the command logged, by level, then each message."""
    if not collector.records:
        return
    stream = stream or sys.stderr
    counts = Counter(r.levelname.lower() for r in collector.records)
    tally = ", ".join(f"{n} {level}" for level, n in sorted(counts.items()))
    print(f"{collector.command}: {tally} logged", file=stream)
    for record, message in zip(collector.records, collector.messages()):
        print(f"  [{record.levelname.lower()}] {message}", file=stream)


def format_error(exc: BaseException) -> str:
    return f"error: {type(exc).__name__}: {exc}"


@dataclass(frozen=True)
class Prediction:
    """One denoised scene; `initial` is the messy input when it is known."""
    name: str
    final: Scene
    initial: Scene | None = None


def _relation_rate(scene: Scene, query: RelationQuery) -> float:
    if len(scene) < query.n:
        return float("nan")
    return scene_relation_rate(scene, query)


def evaluate_predictions(
    predictions: Sequence[Prediction],
    ground_truth: dict[str, Scene] | None = None,
    variant: Variant | str | None = None,
    eta: int = 3,
    epsilon: float = 0.01,
    samples: int = 100,
    seed: int = 0,
) -> pd.DataFrame:
    """Per-scene metrics table; metrics without their inputs are left as NaN."""
    queries = {
        n: RelationQuery(n=n, eta=eta, epsilon=epsilon, samples_per_scene=samples, seed=seed)
        for n in (2, 3)
    }
    rows = []
    for p in predictions:
        final = p.final
        row = {"scene": p.name}
        if variant is not None and p.initial is not None:
            row["success"] = float(evaluate_success(p.initial, final, variant).success)
        if p.initial is not None:
            moved = np.linalg.norm(final.translations() - p.initial.translations(), axis=1)
            row["distance_moved"] = float(moved.mean())
        if ground_truth is not None:
            row["emd_to_gt"] = emd_to_gt(final, ground_truth[p.name])
        row["inside_fraction"] = boundary_violation_fraction(final, floor_margin(final.floor))
        row["respects_floor"] = float(respects_floor(final))
        row["relation_rate_n2"] = _relation_rate(final, queries[2])
        row["relation_rate_n3"] = _relation_rate(final, queries[3])
        rows.append(row)
        logger.debug(f"Evaluated {p.name}: {row}")
    return pd.DataFrame(rows, columns=EVAL_COLUMNS)


def with_mean_row(table: pd.DataFrame, label_column: str = "scene") -> pd.DataFrame:
    """Append a row labelled "mean" holding the column means (NaNs skipped)."""
    means = table.drop(columns=[label_column]).mean(axis=0, skipna=True, numeric_only=True)
    mean_row = pd.DataFrame([{label_column: "mean", **means.to_dict()}], columns=table.columns)
    if table.empty:
        return mean_row
    return pd.concat([table, mean_row], ignore_index=True)


def write_table(table: pd.DataFrame, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False)
    logger.info(f"Wrote {len(table)} rows to {path}")
