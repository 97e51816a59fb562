import json

import numpy as np
import pytest

from src.denoiser import forward, init_params
from src.errors import ConfigError, UntrainedParams
from src.langevin import (
    DenoiseTrajectory,
    InferenceVariant,
    LangevinSchedule,
    Termination,
    denoise,
    distance_moved,
    distance_vs_noise,
)
from src.models import FloorPlan, ObjectState, Scene


def test_alpha_schedule_closed_form():
    schedule = LangevinSchedule(alpha0=0.1, a1=0.005)
    assert schedule.alpha(0) == 0.1
    assert schedule.alpha(200) == 0.05


def test_beta_schedule_steps_every_b2():
    schedule = LangevinSchedule(beta0=0.01, b1=0.9, b2=10)
    assert schedule.beta(0) == 0.01
    assert schedule.beta(9) == 0.01
    assert schedule.beta(10) == 0.01 * 0.9
    assert schedule.beta(200) == 0.01 * 0.9**20


def test_schedules_never_increase():
    schedule = LangevinSchedule()
    alphas = [schedule.alpha(t) for t in range(300)]
    betas = [schedule.beta(t) for t in range(300)]
    assert all(a >= b for a, b in zip(alphas, alphas[1:]))
    assert all(a >= b for a, b in zip(betas, betas[1:]))


def test_presets():
    table_chair = LangevinSchedule.preset("table_chair")
    assert (table_chair.alpha0, table_chair.b2, table_chair.k_consecutive) == (0.12, 2, 1)
    bedroom = LangevinSchedule.preset("bedroom", max_iters=10)
    assert (bedroom.alpha0, bedroom.beta0, bedroom.b2, bedroom.max_iters) == (0.08, 0.008, 8, 10)
    assert LangevinSchedule.from_dict({"preset": "living_room"}) == LangevinSchedule()
    with pytest.raises(ConfigError):
        LangevinSchedule.preset("kitchen")


def test_schedule_validation():
    with pytest.raises(ConfigError):
        LangevinSchedule(alpha0=0.0)
    with pytest.raises(ConfigError):
        LangevinSchedule(b1=1.5)
    with pytest.raises(ConfigError):
        LangevinSchedule(max_iters=0)
    with pytest.raises(ConfigError):
        LangevinSchedule.from_dict({"gamma": 1.0})


def test_direct_is_single_pass(small_scene, tiny_config, tiny_params):
    trajectory = denoise(small_scene, tiny_params, tiny_config, variant=InferenceVariant.DIRECT)
    assert trajectory.iterations == 1
    assert trajectory.termination == Termination.SINGLE_PASS
    assert trajectory.snapshots[0] == small_scene
    expected = forward(small_scene, tiny_params, tiny_config).apply_to(small_scene)
    assert trajectory.final == expected


def test_full_step_without_noise_matches_direct(small_scene, tiny_config, tiny_params):
    schedule = LangevinSchedule(alpha0=1.0, a1=0.0, beta0=0.0, max_iters=1)
    stepped = denoise(small_scene, tiny_params, tiny_config, schedule, InferenceVariant.GRAD_WITH_NOISE, seed=3)
    direct = denoise(small_scene, tiny_params, tiny_config, variant=InferenceVariant.DIRECT)
    assert np.allclose(stepped.final.translations(), direct.final.translations(), atol=1e-12)
    assert np.allclose(stepped.final.rotations(), direct.final.rotations(), atol=1e-12)


def _fixed_point(params):
    pose = np.array([0.2, -0.1, 0.6, 0.8])
    params["head.1.weight"].data = np.zeros_like(params["head.1.weight"].data)
    params["head.1.bias"].data = pose.copy()
    obj = ObjectState(0, tuple(pose[:2]), tuple(pose[2:]), (0.1, 0.1))
    return Scene((obj,), FloorPlan.square(), class_count=2)


def test_fixed_point_converges_without_moving(tiny_config, tiny_params):
    scene = _fixed_point(tiny_params)
    trajectory = denoise(scene, tiny_params, tiny_config, LangevinSchedule(k_consecutive=3), InferenceVariant.GRAD_NO_NOISE)
    assert trajectory.termination == Termination.CONVERGED
    assert trajectory.iterations == 3
    assert distance_moved(trajectory) < 1e-12


def test_max_iters_bounds_trajectory(small_scene, tiny_config, tiny_params):
    schedule = LangevinSchedule(kappa_t=0.0, kappa_r=0.0, max_iters=5)
    trajectory = denoise(small_scene, tiny_params, tiny_config, schedule, InferenceVariant.GRAD_WITH_NOISE, seed=0)
    assert trajectory.termination == Termination.MAX_ITERS
    assert len(trajectory.snapshots) == 6
    assert len(trajectory.displacements) == 5
    for snapshot in trajectory.snapshots:
        assert np.allclose(np.linalg.norm(snapshot.rotations(), axis=1), 1.0)


def test_noiseless_variant_ignores_seed(small_scene, tiny_config, tiny_params):
    schedule = LangevinSchedule(max_iters=8)
    first = denoise(small_scene, tiny_params, tiny_config, schedule, InferenceVariant.GRAD_NO_NOISE, seed=1)
    second = denoise(small_scene, tiny_params, tiny_config, schedule, InferenceVariant.GRAD_NO_NOISE, seed=2)
    assert first.snapshots == second.snapshots


def test_noisy_variant_depends_on_seed(small_scene, tiny_config, tiny_params):
    schedule = LangevinSchedule(max_iters=4, kappa_t=0.0)

    def run(seed):
        return denoise(small_scene, tiny_params, tiny_config, schedule, "grad-noise", seed=seed).final

    assert run(7) == run(7)
    assert run(7) != run(8)


def test_rejects_params_of_other_config(small_scene, tiny_config):
    params = init_params(tiny_config.desk(class_count=2, shape_count=4), 0)
    with pytest.raises(UntrainedParams):
        denoise(small_scene, params, tiny_config)


def test_distance_moved_examples(small_scene):
    still = DenoiseTrajectory([small_scene, small_scene])
    assert distance_moved(still) == 0.0

    obj = ObjectState(0, (0.0, 0.0), (1.0, 0.0), (0.1, 0.1))
    start = Scene((obj,), FloorPlan.square(), class_count=1)
    moved = start.with_poses(np.array([[0.3, 0.4]]), start.rotations())
    assert distance_moved(DenoiseTrajectory([start, moved])) == pytest.approx(0.5)
    assert distance_moved(DenoiseTrajectory([start, moved, start])) == 0.0

    with pytest.raises(ValueError):
        distance_moved(DenoiseTrajectory([start]))


def test_summary_and_json(small_scene, tiny_config, tiny_params):
    trajectory = denoise(small_scene, tiny_params, tiny_config, variant="direct")
    summary = trajectory.summary()
    assert summary["iterations"] == 1
    assert summary["termination"] == "single_pass"
    assert len(json.loads(trajectory.to_json())) == 2


def test_distance_vs_noise_sweeps_both_kinds(small_scene, row_scene, tiny_config, tiny_params):
    schedule = LangevinSchedule(max_iters=3)
    curve = distance_vs_noise(
        [small_scene, row_scene], tiny_params, tiny_config, schedule,
        translation_levels=[0.01, 0.7], rotation_levels=[np.pi / 90, np.pi], seed=4,
    )
    assert curve.columns.tolist() == ["noise", "sigma_t", "sigma_r", "distance_moved", "iterations"]
    assert curve["noise"].tolist() == ["translation", "translation", "rotation", "rotation"]
    assert curve["sigma_t"].tolist() == [0.01, 0.7, 0.0, 0.0]
    assert curve["sigma_r"].tolist() == [0.0, 0.0, np.pi / 90, np.pi]
    assert (curve["distance_moved"] >= 0).all()
    assert (curve["iterations"] <= 3).all()

    again = distance_vs_noise(
        [small_scene, row_scene], tiny_params, tiny_config, schedule,
        translation_levels=[0.01, 0.7], rotation_levels=[np.pi / 90, np.pi], seed=4,
    )
    assert again.equals(curve)
