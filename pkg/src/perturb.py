"""Gaussian perturbation kernels for scenes."""

from __future__ import annotations

import math
import os
from typing import Iterable

import numpy as np

from src.models import NoiseSpec, Scene

# sigma_r = sigma_t * ratio; pi/4 rotation is paired with 0.25 translation for large noise
ROTATION_NOISE_RATIO = float(os.getenv("RR_ROTATION_NOISE_RATIO", str((math.pi / 4) / 0.25)))


def rotate_unit_vectors(rotations: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Rotate (cos, sin) rows by angles `delta` and renormalize to the unit circle.

    Rows with a zero angle offset are returned untouched.
    """
    cos_d, sin_d = np.cos(delta), np.sin(delta)
    rotated = np.stack(
        [
            rotations[:, 0] * cos_d - rotations[:, 1] * sin_d,
            rotations[:, 1] * cos_d + rotations[:, 0] * sin_d,
        ],
        axis=1,
    )
    rotated /= np.linalg.norm(rotated, axis=1, keepdims=True)
    return np.where((delta == 0.0)[:, None], rotations, rotated)


def perturb(
    scene: Scene,
    noise: NoiseSpec,
    seed: int | np.random.Generator | None,
    only_classes: Iterable[int] | None = None,
) -> Scene:
    """Offset every pose by i.i.d. Gaussian noise.

    Translation noise is drawn per coordinate with std `noise.sigma_t`; rotation noise is
    drawn in angle space with std `noise.sigma_r` and re-encoded on the unit circle. When
    `only_classes` is given, objects of other classes keep their pose (the random draws
    are still made for every object so results do not depend on the filter).
    """
    rng = np.random.default_rng(seed)
    n = len(scene)
    dt = rng.normal(0.0, noise.sigma_t, size=(n, 2))
    dtheta = rng.normal(0.0, noise.sigma_r, size=n)

    if only_classes is not None:
        keep = ~np.isin(scene.class_ids(), list(only_classes))
        dt[keep] = 0.0
        dtheta[keep] = 0.0

    translations = scene.translations() + dt
    rotations = rotate_unit_vectors(scene.rotations(), dtheta)
    return scene.with_poses(translations, rotations)


def sample_noise_level(
    base_std: float,
    seed: int | np.random.Generator | None,
    rotation_ratio: float = ROTATION_NOISE_RATIO,
) -> NoiseSpec:
    """Draw a kernel std from |N(0, base_std^2)| and pair it with a rotation std."""
    if base_std <= 0:
        raise ValueError(f"base_std must be positive, got {base_std}")
    rng = np.random.default_rng(seed)
    sigma = abs(float(rng.normal(0.0, base_std)))
    return NoiseSpec(sigma_t=sigma, sigma_r=sigma * rotation_ratio)
