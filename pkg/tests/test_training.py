import numpy as np
import pandas as pd
import pytest

from src.autograd import Tensor
from src.denoiser import TransformPrediction, init_params
from src.errors import ClassMultisetMismatch, ConfigError, EmptyDataset
from src.models import FloorPlan, ObjectState, Scene
from src.storage import load_checkpoint
from src.training import TrainConfig, denoising_loss, resolve_model_config, train


def _scene(points, classes=None):
    classes = classes or [0] * len(points)
    objects = tuple(ObjectState(c, p, (1.0, 0.0), (0.05, 0.05)) for c, p in zip(classes, points))
    return Scene(objects, FloorPlan.square(), class_count=2)


def _pred(points) -> Tensor:
    return Tensor([[x, y, 1.0, 0.0] for x, y in points])


def test_exact_prediction_has_zero_loss():
    clean = _scene([(0.1, 0.2), (-0.4, 0.3)])
    messy = _scene([(0.15, 0.2), (-0.5, 0.3)])
    assert denoising_loss(_pred([(0.1, 0.2), (-0.4, 0.3)]), clean, messy, 0.3).item() == 0.0


def test_single_object_squared_error():
    clean = _scene([(0.0, 0.0)])
    loss = denoising_loss(_pred([(0.1, 0.0)]), clean, clean, lambda1=0.0)
    assert loss.item() == pytest.approx(0.01)


def test_l1_term_is_weighted():
    clean = _scene([(0.0, 0.0)])
    loss = denoising_loss(_pred([(0.1, -0.2)]), clean, clean, lambda1=0.5)
    assert loss.item() == pytest.approx(0.05 + 0.5 * 0.3)


def test_assignment_pairing_beats_identity():
    clean = _scene([(0.0, 0.0), (1.0, 0.0)])
    # the perturbation swapped the two objects, so identity pairing is expensive
    messy = _scene([(0.95, 0.0), (0.05, 0.0)])
    pred = _pred([(0.98, 0.0), (0.02, 0.0)])
    matched = denoising_loss(pred, clean, messy, 0.3, pairing="assignment").item()
    identity = denoising_loss(pred, clean, messy, 0.3, pairing="identity").item()
    assert matched < identity


def test_loss_ignores_clean_object_order():
    clean = _scene([(0.0, 0.0), (0.5, 0.5), (1.0, 0.0)], classes=[0, 1, 0])
    messy = _scene([(0.1, 0.0), (0.6, 0.4), (0.9, 0.1)], classes=[0, 1, 0])
    pred = _pred([(0.05, 0.0), (0.55, 0.45), (0.95, 0.05)])
    base = denoising_loss(pred, clean, messy, 0.3).item()
    assert denoising_loss(pred, clean.permuted([2, 0, 1]), messy, 0.3).item() == pytest.approx(base)


def test_loss_accepts_transform_prediction():
    clean = _scene([(0.0, 0.0)])
    pred = TransformPrediction(np.array([[0.0, 0.1]]), np.array([[1.0, 0.0]]))
    assert denoising_loss(pred, clean, clean, 0.0).item() == pytest.approx(0.01)


def test_loss_rejects_class_mismatch():
    clean = _scene([(0.0, 0.0), (1.0, 0.0)], classes=[0, 1])
    messy = _scene([(0.0, 0.0), (1.0, 0.0)], classes=[0, 0])
    with pytest.raises(ClassMultisetMismatch):
        denoising_loss(_pred([(0, 0), (1, 0)]), clean, messy, 0.3)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(pairing="nearest")
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"steps": 10})


def test_train_config_round_trip():
    config = TrainConfig(step_count=7, denoiser={"desk_preset": True, "token_dim": 16})
    assert TrainConfig.from_dict(config.to_dict()) == config


def test_resolve_model_config_for_directory_source(small_scene):
    config = TrainConfig(source="some/dir", denoiser={"token_dim": 16, "head_count": 2})
    model = resolve_model_config(config, [small_scene])
    assert model.class_count == 2
    assert model.shape_count == 4


def _short_run(**overrides) -> TrainConfig:
    settings = dict(step_count=3, batch_size=2, seed=4, source="unused", noise_mode="half_normal")
    settings.update(overrides)
    return TrainConfig(**settings)


def test_zero_learning_rate_keeps_parameters(tiny_config, row_scene):
    result = train(_short_run(learning_rate=0.0), scenes=[row_scene], model=tiny_config, progress=False)
    fresh = init_params(tiny_config, 4)
    for name, p in result.params.items():
        assert np.array_equal(p.data, fresh[name].data)


def test_training_is_deterministic(tiny_config, row_scene):
    config = _short_run(learning_rate=1e-3)
    first = train(config, scenes=[row_scene], model=tiny_config, progress=False)
    second = train(config, scenes=[row_scene], model=tiny_config, progress=False)
    assert first.log["loss"].tolist() == second.log["loss"].tolist()
    for name, p in first.params.items():
        assert np.array_equal(p.data, second.params[name].data)


def test_training_writes_log_and_checkpoints(tiny_config, row_scene, tmp_path):
    config = _short_run(step_count=4, checkpoint_every=2, out_dir=str(tmp_path))
    result = train(config, scenes=[row_scene], model=tiny_config, progress=False)
    assert [p.name for p in result.checkpoints] == ["ckpt_2.json", "ckpt_4.json"]

    log = pd.read_csv(tmp_path / "train_log.csv")
    assert list(log.columns) == ["step", "loss", "wall_time"]
    assert log["step"].tolist() == [1, 2, 3, 4]

    params, model, step = load_checkpoint(tmp_path / "ckpt_4.json")
    assert model == tiny_config
    assert step == 4
    for name, p in result.params.items():
        assert np.array_equal(params[name].data, p.data)


def test_empty_dataset(tiny_config):
    with pytest.raises(EmptyDataset):
        train(_short_run(), scenes=[], model=tiny_config, progress=False)


def test_synthetic_source_uses_table_chair_vocabulary(tiny_config):
    config = TrainConfig(source="grouping_by_shape", step_count=1, batch_size=1, dataset_size=2)
    result = train(config, model=tiny_config, progress=False)
    assert len(result.log) == 1


@pytest.mark.slow
def test_overfits_single_scene(row_scene):
    config = TrainConfig(
        source="unused", step_count=2000, batch_size=1, learning_rate=1e-3,
        noise_mode="half_normal", base_noise_std=0.01, seed=0,
        denoiser={"desk_preset": True, "class_count": 2, "shape_count": 4},
    )
    result = train(config, scenes=[row_scene], progress=False)
    losses = result.log["loss"]
    assert losses.tail(50).mean() < 0.1 * losses.head(50).mean()
