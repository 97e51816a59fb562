"""Read and write scenes, manifests, trajectories and model checkpoints as JSON."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from src.autograd import Tensor, parameter
from src.denoiser import DenoiserConfig, check_params
from src.errors import ConfigError, IncompatibleCheckpoint, InvalidScene, UntrainedParams
from src.models import Scene

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "tidyroom-checkpoint"
CHECKPOINT_VERSION = 1
MANIFEST_NAME = "manifest.json"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n", encoding="utf-8")


def save_scene(scene: Scene, path: Path) -> None:
    _write(Path(path), scene.to_json())


def load_scene(path: Path) -> Scene:
    """Load one scene; a missing file raises OSError, malformed content InvalidScene."""
    data = Path(path).read_text(encoding="utf-8")
    try:
        return Scene.from_json(data)
    except json.JSONDecodeError as e:
        raise InvalidScene(f"{path}: not valid JSON ({e})") from e


def load_scene_dir(directory: Path) -> list[tuple[str, Scene]]:
    """Load every scene file of a directory in name order, skipping unreadable ones."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"scene directory not found: {directory}")

    scenes = []
    for path in sorted(directory.glob("*.json")):
        if path.name == MANIFEST_NAME:
            continue
        try:
            scenes.append((path.stem, load_scene(path)))
        except (InvalidScene, OSError) as e:
            logger.warning(f"Skipping unreadable scene file {path.name}: {e}")
    logger.info(f"Loaded {len(scenes)} scenes from {directory}")
    return scenes


def save_manifest(out_dir: Path, variant: str, master_seed: int, entries: Sequence[tuple[str, int]]) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    manifest = {
        "variant": variant,
        "count": len(entries),
        "master_seed": master_seed,
        "scenes": [{"file": name, "seed": seed} for name, seed in entries],
    }
    _write(path, json.dumps(manifest, indent=2))
    return path


def load_manifest(out_dir: Path) -> dict[str, Any]:
    return json.loads((Path(out_dir) / MANIFEST_NAME).read_text(encoding="utf-8"))


def save_trajectory(snapshots: Iterable[Scene], path: Path) -> None:
    _write(Path(path), json.dumps([s.to_dict() for s in snapshots], indent=2))


def load_trajectory(path: Path) -> list[Scene]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise InvalidScene(f"{path}: trajectory must be a JSON array of scenes")
    return [Scene.from_dict(d) for d in data]


def save_checkpoint(path: Path, params: dict[str, Tensor], config: DenoiserConfig, step: int) -> None:
    """Write named parameter tensors with their shapes; output is byte-stable."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "step": step,
        "config": config.to_dict(),
        "params": {
            name: {"shape": list(p.shape), "data": p.data.reshape(-1).tolist()}
            for name, p in params.items()
        },
    }
    _write(Path(path), json.dumps(payload, sort_keys=True))
    logger.info(f"Saved checkpoint {path} (step {step})")


def load_checkpoint(
    path: Path,
    expected: DenoiserConfig | None = None,
) -> tuple[dict[str, Tensor], DenoiserConfig, int]:
    """Load (params, config, step), validating against the embedded config.

    When `expected` is given, the embedded config must equal it.
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise IncompatibleCheckpoint(f"{path}: not valid JSON ({e})") from e

    if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != CHECKPOINT_VERSION:
        raise IncompatibleCheckpoint(
            f"{path}: expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}, "
            f"got {payload.get('format')} v{payload.get('version')}"
        )
    try:
        config = DenoiserConfig.from_dict(payload["config"])
        params = {
            name: parameter(np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"]))
            for name, entry in payload["params"].items()
        }
        check_params(params, config)
    except (KeyError, ValueError, ConfigError, UntrainedParams) as e:
        raise IncompatibleCheckpoint(f"{path}: {e}") from e

    if expected is not None and expected != config:
        raise IncompatibleCheckpoint(f"{path}: checkpoint config does not match the requested model config")
    step = int(payload.get("step", 0))
    logger.info(f"Loaded checkpoint {path} (step {step}, {len(params)} tensors)")
    return params, config, step
