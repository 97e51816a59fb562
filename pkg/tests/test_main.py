import json
import logging

import pandas as pd
import pytest

from src.main import main
from src.models import FloorPlan, ObjectState, Scene
from src.storage import load_manifest, load_scene, load_trajectory, save_checkpoint, save_scene


@pytest.fixture(autouse=True)
def clean_env(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    for name in ("RR_SEED", "RR_COUNT", "RR_OUT", "RR_VARIANT", "RR_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)


def test_generate_is_deterministic(tmp_path):
    for out in ("a", "b"):
        assert main(["generate", "--variant", "grouping_by_shape", "--count", "3", "--seed", "4", "--out", out]) == 0
    for i in range(3):
        assert (tmp_path / "a" / f"scene_{i}.json").read_bytes() == (tmp_path / "b" / f"scene_{i}.json").read_bytes()
    manifest = load_manifest(tmp_path / "a")
    assert manifest["variant"] == "grouping_by_shape"
    assert [s["file"] for s in manifest["scenes"]] == ["scene_0.json", "scene_1.json", "scene_2.json"]


def test_generate_nothing(tmp_path):
    assert main(["generate", "--count", "0", "--out", "empty"]) == 0
    assert load_manifest(tmp_path / "empty")["count"] == 0
    assert [p.name for p in (tmp_path / "empty").iterdir()] == ["manifest.json"]


def test_errors_exit_with_one(capsys):
    assert main(["generate", "--count", "-1"]) == 1
    assert capsys.readouterr().err.startswith("error: ConfigError:")


def test_missing_required_option(capsys):
    assert main(["perturb"]) == 1
    assert "needs scenes" in capsys.readouterr().err


def test_config_file_and_env(tmp_path, monkeypatch):
    (tmp_path / "run.json").write_text(json.dumps({"generate": {"count": 2, "out": "from_file"}}))
    monkeypatch.setenv("RR_COUNT", "1")
    assert main(["generate", "--config", "run.json"]) == 0
    assert load_manifest(tmp_path / "from_file")["count"] == 1


def test_perturb_fixed_noise(tmp_path):
    main(["generate", "--count", "2", "--out", "clean"])
    assert main(["perturb", "--scenes", "clean", "--out", "messy", "--mode", "fixed", "--sigma-t", "0"]) == 0
    for name in ("scene_0", "scene_1"):
        assert load_scene(tmp_path / "messy" / f"{name}.json") == load_scene(tmp_path / "clean" / f"{name}.json")
    assert not (tmp_path / "messy" / "manifest.json").exists()


def test_denoise_and_eval(tmp_path, tiny_config, tiny_params):
    save_checkpoint(tmp_path / "ckpt.json", tiny_params, tiny_config, step=0)
    (tmp_path / "denoise.json").write_text(json.dumps({"schedule": {"max_iters": 4}}))
    main(["generate", "--count", "2", "--out", "clean"])
    main(["perturb", "--scenes", "clean", "--out", "messy", "--seed", "1"])

    assert main([
        "denoise", "--config", "denoise.json", "--scene", "messy",
        "--checkpoint", "ckpt.json", "--out", "pred", "--variant", "grad",
    ]) == 0
    summary = pd.read_csv(tmp_path / "pred" / "summary.csv")
    assert summary["scene"].tolist() == ["scene_0", "scene_1"]
    assert (summary["iterations"] <= 4).all()
    trajectory = load_trajectory(tmp_path / "pred" / "scene_0" / "trajectory.json")
    assert trajectory[0] == load_scene(tmp_path / "messy" / "scene_0.json")

    assert main([
        "eval", "--pred", "pred", "--gt", "clean", "--variant", "symmetry_parallelism",
        "--samples", "5", "--out", "eval.csv",
    ]) == 0
    table = pd.read_csv(tmp_path / "eval.csv")
    assert table["scene"].tolist() == ["scene_0", "scene_1", "mean"]
    assert table["emd_to_gt"].notna().all()


def test_eval_rejects_mismatched_sets(tmp_path, row_scene, capsys):
    save_scene(row_scene, tmp_path / "pred" / "a.json")
    save_scene(row_scene, tmp_path / "gt" / "b.json")
    assert main(["eval", "--pred", "pred", "--gt", "gt"]) == 1
    assert "MismatchedSets" in capsys.readouterr().err


def test_render_scene_and_trajectory(tmp_path, small_scene):
    save_scene(small_scene, tmp_path / "one.json")
    assert main(["render", "--input", "one.json", "--out", "svg"]) == 0
    assert (tmp_path / "svg" / "one.svg").exists()

    (tmp_path / "traj.json").write_text(json.dumps([small_scene.to_dict(), small_scene.to_dict()]))
    assert main(["render", "--input", "traj.json", "--out", "frames"]) == 0
    assert sorted(p.name for p in (tmp_path / "frames").iterdir()) == ["frame_0000.svg", "frame_0001.svg"]


def test_score_regularity_with_curve(tmp_path):
    main(["generate", "--count", "2", "--out", "clean"])
    assert main([
        "score-regularity", "--scenes", "clean", "--samples", "10",
        "--noise-levels", "0,0.2", "--out", "reg.csv",
    ]) == 0
    assert pd.read_csv(tmp_path / "reg.csv")["scene"].tolist() == ["scene_0", "scene_1", "mean"]
    assert pd.read_csv(tmp_path / "reg_curve.csv")["noise_level"].tolist() == [0.0, 0.2]


def test_malformed_scene_is_reported(tmp_path, row_scene, capsys):
    bad = row_scene.to_dict()
    bad["objects"][0]["t"] = 5
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    assert main(["render", "--input", "bad.json"]) == 1
    assert capsys.readouterr().err.startswith("error: InvalidScene:")


def test_numeric_blowup_is_reported(monkeypatch, capsys):
    def overflow(run):
        raise FloatingPointError("exp produced a non-finite value")

    monkeypatch.setattr("src.main.cmd_generate", overflow)
    assert main(["generate"]) == 1
    assert capsys.readouterr().err.startswith("error: FloatingPointError:")


def test_score_regularity_compares_scene_sets(tmp_path):
    main(["generate", "--count", "2", "--out", "clean"])
    main(["perturb", "--scenes", "clean", "--out", "messy", "--mode", "fixed", "--sigma-t", "0.3"])
    assert main([
        "score-regularity", "--scenes", "clean", "--compare", "messy",
        "--samples", "5", "--trials", "3", "--out", "reg.csv",
    ]) == 0
    overall = pd.read_csv(tmp_path / "reg_overall.csv")
    assert overall.columns.tolist() == ["method", "n2_eta3", "n2_eta5", "n3_eta3", "n3_eta5", "overall"]
    assert overall["method"].tolist() == ["clean", "messy"]
    rates = overall.set_index("method").drop(columns="overall")
    assert ((rates >= 0.0) & (rates <= 1.0)).all().all()
    expected = (rates / rates.max().replace(0.0, 1.0)).mean(axis=1)
    assert overall["overall"].tolist() == pytest.approx(expected.tolist())


def test_overridden_settings_are_logged(caplog):
    with caplog.at_level(logging.INFO, logger="src.main"):
        assert main(["generate", "--count", "1", "--out", "one"]) == 0
    assert "Running generate; overridden settings: {'count': 'flag', 'out': 'flag'}" in caplog.text


def test_warnings_are_summarized_after_the_run(tmp_path, small_scene, capsys):
    save_scene(small_scene, tmp_path / "clean" / "good.json")
    (tmp_path / "clean" / "bad.json").write_text("{")
    assert main(["perturb", "--scenes", "clean", "--out", "messy"]) == 0
    err = capsys.readouterr().err
    assert "perturb: 1 warning logged" in err
    assert "bad.json" in err


def test_denoise_accepts_scene_with_fewer_classes(tmp_path, tiny_config, tiny_params):
    save_checkpoint(tmp_path / "ckpt.json", tiny_params, tiny_config, step=0)
    (tmp_path / "denoise.json").write_text(json.dumps({"schedule": {"max_iters": 2}}))
    tables_only = Scene(
        (ObjectState.from_angle(0, (0.1, 0.2), 0.0, (0.2, 0.1)), ObjectState.from_angle(0, (-0.4, 0.3), 1.0, (0.2, 0.1))),
        FloorPlan.square(),
        class_count=1,
    )
    save_scene(tables_only, tmp_path / "tables.json")
    assert main([
        "denoise", "--config", "denoise.json", "--scene", "tables.json",
        "--checkpoint", "ckpt.json", "--out", "pred", "--variant", "grad",
    ]) == 0
    assert load_scene(tmp_path / "pred" / "final.json").class_count == 1


def test_denoise_rejects_unknown_class(tmp_path, tiny_config, tiny_params, capsys):
    save_checkpoint(tmp_path / "ckpt.json", tiny_params, tiny_config, step=0)
    extra = Scene((ObjectState.from_angle(2, (0.0, 0.0), 0.0, (0.1, 0.1)),), FloorPlan.square(), class_count=3)
    save_scene(extra, tmp_path / "extra.json")
    assert main(["denoise", "--scene", "extra.json", "--checkpoint", "ckpt.json", "--out", "pred"]) == 1
    assert capsys.readouterr().err.startswith("error: IncompatibleCheckpoint:")
