"""Denoising-objective training: perturb clean scenes, predict them back, step Adam."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.assignment import match_scenes
from src.autograd import AdamState, Tensor, adam_step, grad
from src.config import env_flag
from src.denoiser import DenoiserConfig, TransformPrediction, forward_tensor, init_params
from src.errors import ClassMultisetMismatch, ConfigError, EmptyDataset
from src.models import Scene
from src.perturb import perturb, sample_noise_level
from src.storage import load_scene_dir, save_checkpoint
from src.table_chair import CLASS_COUNT, SHAPE_COUNT, Variant, draw_bimodal_noise, generate_dataset

logger = logging.getLogger(__name__)

NOISE_MODES = ("auto", "bimodal", "half_normal")
PAIRINGS = ("assignment", "identity")
LOG_NAME = "train_log.csv"


@dataclass(frozen=True)
class TrainConfig:
    """Training run settings. `source` is a Table-Chair variant name or a scene directory."""
    source: str = Variant.SYMMETRY_PARALLELISM.value
    base_noise_std: float = 0.1
    lambda1: float = 0.3
    batch_size: int = 8
    step_count: int = 1000
    learning_rate: float = 1e-4
    seed: int = 0
    dataset_size: int = 500  # synthetic sources only
    noise_mode: str = "auto"  # bimodal for synthetic sources, half_normal otherwise
    large_probability: float = 0.5
    pairing: str = "assignment"
    checkpoint_every: int = 0  # 0 keeps only the final checkpoint
    out_dir: str | None = None
    denoiser: dict[str, Any] = field(default_factory=lambda: {"desk_preset": True})

    def __post_init__(self) -> None:
        for name in ("base_noise_std", "batch_size", "step_count", "dataset_size"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("lambda1", "learning_rate", "checkpoint_every"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not 0.0 <= self.large_probability <= 1.0:
            raise ConfigError(f"large_probability must lie in [0, 1], got {self.large_probability}")
        if self.noise_mode not in NOISE_MODES:
            raise ConfigError(f"noise_mode must be one of {NOISE_MODES}, got {self.noise_mode!r}")
        if self.pairing not in PAIRINGS:
            raise ConfigError(f"pairing must be one of {PAIRINGS}, got {self.pairing!r}")

    @property
    def is_synthetic(self) -> bool:
        return self.source in {v.value for v in Variant}

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TrainConfig:
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class TrainResult:
    params: dict[str, Tensor]
    model: DenoiserConfig
    log: pd.DataFrame  # step, loss, wall_time
    checkpoints: list[Path] = field(default_factory=list)


def denoising_loss(
    pred: Tensor | TransformPrediction,
    clean: Scene,
    messy: Scene,
    lambda1: float,
    pairing: str = "assignment",
) -> Tensor:
    """Mean over objects of squared L2 plus lambda1-weighted L1 pose error.

    `pred` follows the object order of `messy`. With "assignment" pairing each messy
    object is compared with its class-wise EMD match in `clean`; "identity" compares
    objects by index.
    """
    if pairing == "assignment":
        mapping = match_scenes(messy, clean).mapping
    elif pairing == "identity":
        if not np.array_equal(messy.class_ids(), clean.class_ids()):
            raise ClassMultisetMismatch("identity pairing needs the same class at every index")
        mapping = np.arange(len(messy))
    else:
        raise ValueError(f"unknown pairing {pairing!r}")

    if isinstance(pred, TransformPrediction):
        pred = Tensor(pred.as_array())
    target = np.concatenate([clean.translations(), clean.rotations()], axis=1)[mapping]
    diff = pred - Tensor(target)
    return ((diff * diff).sum() + lambda1 * diff.abs().sum()) * (1.0 / len(messy))


def load_training_scenes(config: TrainConfig) -> list[Scene]:
    if config.is_synthetic:
        scenes, _ = generate_dataset(config.source, config.dataset_size, config.seed)
        return scenes
    return [scene for _, scene in load_scene_dir(Path(config.source))]


def resolve_model_config(config: TrainConfig, scenes: Sequence[Scene]) -> DenoiserConfig:
    """DenoiserConfig from `config.denoiser`, filling class/shape counts from the data."""
    settings = dict(config.denoiser)
    if config.is_synthetic:
        settings.setdefault("class_count", CLASS_COUNT)
        settings.setdefault("shape_count", SHAPE_COUNT)
    else:
        settings.setdefault("class_count", max(s.class_count for s in scenes))
        settings.setdefault("shape_count", max(int(s.shape_ids().max()) for s in scenes) + 1)
    return DenoiserConfig.from_dict(settings)


def _messy_copy(clean: Scene, config: TrainConfig, rng: np.random.Generator) -> Scene:
    mode = config.noise_mode
    if mode == "auto":
        mode = "bimodal" if config.is_synthetic else "half_normal"
    if mode == "bimodal":
        noise, _ = draw_bimodal_noise(rng, config.large_probability)
    else:
        noise = sample_noise_level(config.base_noise_std, rng)
    return perturb(clean, noise, rng)


def train(
    config: TrainConfig,
    scenes: Sequence[Scene] | None = None,
    model: DenoiserConfig | None = None,
    progress: bool | None = None,
) -> TrainResult:
    """Optimize a fresh denoiser on clean `scenes` (loaded from `config.source` if omitted).

    Each step draws `batch_size` scenes uniformly with replacement, perturbs each with its
    own noise level and averages the per-scene gradients before one Adam update.
    """
    rng = np.random.default_rng(config.seed)
    scenes = list(scenes) if scenes is not None else load_training_scenes(config)
    if not scenes:
        raise EmptyDataset(f"no training scenes found in {config.source}")

    model = model or resolve_model_config(config, scenes)
    params = init_params(model, rng)
    state = AdamState(learning_rate=config.learning_rate)
    out_dir = Path(config.out_dir) if config.out_dir else None
    progress = env_flag("RR_PROGRESS", True) if progress is None else progress

    logger.info(
        f"Training on {len(scenes)} scenes: {config.step_count} steps, batch {config.batch_size}, "
        f"lr {config.learning_rate}, token_dim {model.token_dim}"
    )
    rows = []
    checkpoints: list[Path] = []
    start = time.perf_counter()
    bar = tqdm(range(1, config.step_count + 1), desc="train", disable=not progress)
    for step in bar:
        totals = {name: np.zeros_like(p.data) for name, p in params.items()}
        losses = []
        for index in rng.integers(0, len(scenes), size=config.batch_size):
            clean = scenes[index]
            messy = _messy_copy(clean, config, rng)
            loss = denoising_loss(forward_tensor(messy, params, model), clean, messy, config.lambda1, config.pairing)
            for name, g in grad(loss, params).items():
                totals[name] += g
            losses.append(loss.item())

        adam_step(params, {name: g / config.batch_size for name, g in totals.items()}, state)
        mean_loss = float(np.mean(losses))
        rows.append({"step": step, "loss": mean_loss, "wall_time": time.perf_counter() - start})
        bar.set_postfix(loss=f"{mean_loss:.5f}")

        if out_dir and config.checkpoint_every and step % config.checkpoint_every == 0:
            path = out_dir / f"ckpt_{step}.json"
            save_checkpoint(path, params, model, step)
            checkpoints.append(path)

    log = pd.DataFrame(rows, columns=["step", "loss", "wall_time"])
    if out_dir:
        final = out_dir / f"ckpt_{config.step_count}.json"
        if final not in checkpoints:
            save_checkpoint(final, params, model, config.step_count)
            checkpoints.append(final)
        log.to_csv(out_dir / LOG_NAME, index=False)
        logger.info(f"Wrote training log to {out_dir / LOG_NAME}")

    logger.info(f"Training finished: loss {rows[0]['loss']:.5f} -> {rows[-1]['loss']:.5f}")
    return TrainResult(params=params, model=model, log=log, checkpoints=checkpoints)
