"""Command-line entry point: generate, perturb, train, denoise, eval, render, score-regularity."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from src.config import RunConfig, resolve
from src.errors import ConfigError, IncompatibleCheckpoint, MismatchedSets, RearrangeError
from src.integer_relations import RelationQuery, overall_relation_score, relation_rate_curve, scene_relation_rate
from src.langevin import InferenceVariant, LangevinSchedule, denoise
from src.models import NoiseSpec, Scene
from src.perturb import ROTATION_NOISE_RATIO, perturb
from src.render import render_scene, render_trajectory
from src.reporting import (
    Prediction,
    WarningCollector,
    evaluate_predictions,
    format_error,
    report_warnings,
    with_mean_row,
    write_table,
)
from src.storage import (
    load_checkpoint,
    load_scene,
    load_scene_dir,
    load_trajectory,
    save_manifest,
    save_scene,
    save_trajectory,
)
from src.table_chair import Variant, draw_bimodal_noise, generate_dataset
from src.training import TrainConfig, train

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

GENERATE_DEFAULTS = {"variant": Variant.SYMMETRY_PARALLELISM.value, "count": 10, "seed": 0, "out": "data/clean", "random_phase": True}
PERTURB_DEFAULTS = {
    "scenes": None, "out": "data/messy", "seed": 0, "mode": "bimodal",
    "sigma_t": 0.1, "sigma_r": None, "large_probability": 0.5, "only_classes": None,
}
DENOISE_DEFAULTS = {
    "scene": None, "checkpoint": None, "out": "out/denoise", "preset": "table_chair",
    "variant": InferenceVariant.GRAD_WITH_NOISE.value, "seed": 0, "schedule": {},
}
EVAL_DEFAULTS = {
    "pred": None, "gt": None, "variant": None, "out": "out/eval.csv",
    "eta": 3, "epsilon": 0.01, "samples": 100, "seed": 0,
}
RENDER_DEFAULTS = {"input": None, "out": "out/render", "size": 512}
SCORE_DEFAULTS = {
    "scenes": None, "out": "out/regularity.csv", "n": 2, "eta": 3, "epsilon": 0.01,
    "samples": 100, "trials": 10, "seed": 0, "noise_levels": None, "compare": None,
}
OVERALL_SETTINGS = [(2, 3), (2, 5), (3, 3), (3, 5)]


def _require(run: RunConfig, *keys: str) -> None:
    missing = [k for k in keys if run.get(k) in (None, "")]
    if missing:
        raise ConfigError(f"{run.command} needs {', '.join(missing)}")


def _derived_seeds(seed: int, count: int) -> list[int]:
    return [int(s) for s in np.random.default_rng(seed).integers(0, 2**31 - 1, size=count)]


# -- commands ------------------------------------------------------------------------------


def cmd_generate(run: RunConfig) -> None:
    if run["count"] < 0:
        raise ConfigError(f"count must be >= 0, got {run['count']}")
    out = Path(run["out"])
    out.mkdir(parents=True, exist_ok=True)
    scenes, seeds = generate_dataset(run["variant"], run["count"], run["seed"], random_phase=run["random_phase"])
    entries = []
    for i, (scene, seed) in enumerate(zip(scenes, seeds)):
        name = f"scene_{i}.json"
        save_scene(scene, out / name)
        entries.append((name, seed))
    save_manifest(out, Variant(run["variant"]).value, run["seed"], entries)
    logger.info(f"Wrote {len(entries)} scenes and manifest to {out}")


def cmd_perturb(run: RunConfig) -> None:
    _require(run, "scenes")
    if run["mode"] not in ("bimodal", "fixed"):
        raise ConfigError(f"perturb mode must be bimodal or fixed, got {run['mode']!r}")
    rng = np.random.default_rng(run["seed"])
    out = Path(run["out"])
    sigma_r = run["sigma_r"] if run["sigma_r"] is not None else run["sigma_t"] * ROTATION_NOISE_RATIO
    for name, scene in load_scene_dir(Path(run["scenes"])):
        if run["mode"] == "bimodal":
            noise, _ = draw_bimodal_noise(rng, run["large_probability"])
        else:
            noise = NoiseSpec(sigma_t=run["sigma_t"], sigma_r=sigma_r)
        save_scene(perturb(scene, noise, rng, run["only_classes"]), out / f"{name}.json")
    logger.info(f"Wrote perturbed scenes to {out}")


def cmd_train(run: RunConfig) -> None:
    result = train(TrainConfig.from_dict(run.values))
    logger.info(f"Final loss {result.log['loss'].iloc[-1]:.5f}; checkpoints: {[str(p) for p in result.checkpoints]}")


def _denoise_one(scene: Scene, params, config, schedule, variant, seed: int, out: Path) -> dict[str, Any]:
    max_class, max_shape = int(scene.class_ids().max()), int(scene.shape_ids().max())
    if max_class >= config.class_count or max_shape >= config.shape_count:
        raise IncompatibleCheckpoint(
            f"scene uses class id {max_class} / shape id {max_shape}, "
            f"checkpoint supports {config.class_count} classes / {config.shape_count} shapes"
        )
    trajectory = denoise(scene, params, config, schedule, variant, seed)
    save_scene(trajectory.final, out / "final.json")
    save_trajectory(trajectory.snapshots, out / "trajectory.json")
    summary = trajectory.summary()
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return summary


def cmd_denoise(run: RunConfig) -> None:
    _require(run, "scene", "checkpoint")
    params, config, _ = load_checkpoint(Path(run["checkpoint"]))
    schedule = LangevinSchedule.preset(run["preset"], **run["schedule"])
    variant = InferenceVariant(run["variant"])
    source, out = Path(run["scene"]), Path(run["out"])

    if source.is_dir():
        scenes = load_scene_dir(source)
        rows = []
        for (name, scene), seed in zip(scenes, _derived_seeds(run["seed"], len(scenes))):
            summary = _denoise_one(scene, params, config, schedule, variant, seed, out / name)
            rows.append({"scene": name, **summary})
        write_table(pd.DataFrame(rows, columns=["scene", "iterations", "distance_moved", "termination"]), out / "summary.csv")
        return

    summary = _denoise_one(load_scene(source), params, config, schedule, variant, run["seed"], out)
    logger.info(
        f"Denoised {source.name}: {summary['iterations']} iterations, "
        f"moved {summary['distance_moved']:.4f}, {summary['termination']}"
    )


def _load_predictions(pred_dir: Path) -> list[Prediction]:
    """Denoise output folders (final.json + trajectory.json) or a flat scene directory."""
    folders = sorted(p for p in pred_dir.iterdir() if p.is_dir() and (p / "final.json").exists())
    if not folders:
        return [Prediction(name, scene) for name, scene in load_scene_dir(pred_dir)]
    predictions = []
    for folder in folders:
        trajectory = folder / "trajectory.json"
        initial = load_trajectory(trajectory)[0] if trajectory.exists() else None
        predictions.append(Prediction(folder.name, load_scene(folder / "final.json"), initial))
    return predictions


def cmd_eval(run: RunConfig) -> None:
    _require(run, "pred")
    if run["gt"] is None and run["variant"] is None:
        raise ConfigError("eval needs --gt, --variant or both")
    predictions = _load_predictions(Path(run["pred"]))

    ground_truth = None
    if run["gt"] is not None:
        ground_truth = dict(load_scene_dir(Path(run["gt"])))
        names = {p.name for p in predictions}
        if names != set(ground_truth):
            raise MismatchedSets(
                f"prediction and ground-truth scenes differ: only predicted {sorted(names - set(ground_truth))[:5]}, "
                f"only ground truth {sorted(set(ground_truth) - names)[:5]}"
            )

    table = evaluate_predictions(
        predictions, ground_truth, run["variant"],
        eta=run["eta"], epsilon=run["epsilon"], samples=run["samples"], seed=run["seed"],
    )
    write_table(with_mean_row(table), Path(run["out"]))


def cmd_render(run: RunConfig) -> None:
    _require(run, "input")
    source, out = Path(run["input"]), Path(run["out"])
    data = json.loads(source.read_text(encoding="utf-8"))
    if isinstance(data, list):
        render_trajectory(load_trajectory(source), out, run["size"])
        return
    target = out if out.suffix == ".svg" else out / f"{source.stem}.svg"
    render_scene(Scene.from_dict(data), target, run["size"])
    logger.info(f"Rendered {source.name} to {target}")


def cmd_score_regularity(run: RunConfig) -> None:
    _require(run, "scenes")
    query = RelationQuery(
        n=run["n"], eta=run["eta"], epsilon=run["epsilon"],
        samples_per_scene=run["samples"], invariance_trials=run["trials"], seed=run["seed"],
    )
    scenes = load_scene_dir(Path(run["scenes"]))
    table = pd.DataFrame(
        [{"scene": name, "rate": scene_relation_rate(scene, query)} for name, scene in scenes],
        columns=["scene", "rate"],
    )
    out = Path(run["out"])
    write_table(with_mean_row(table), out)

    if run["noise_levels"]:
        levels = [float(v) for v in run["noise_levels"]]
        curve = relation_rate_curve([s for _, s in scenes], levels, query, run["seed"])
        write_table(curve, out.with_name(f"{out.stem}_curve.csv"))

    compare = run["compare"]
    if isinstance(compare, str):
        compare = _path_list(compare)
    if compare:
        methods = {str(run["scenes"]): [s for _, s in scenes]}
        for directory in compare:
            methods[str(directory)] = [s for _, s in load_scene_dir(Path(directory))]
        overall = _overall_scores(methods, query)
        write_table(overall.reset_index(), out.with_name(f"{out.stem}_overall.csv"))


def _overall_scores(methods: dict[str, list[Scene]], query: RelationQuery) -> pd.DataFrame:
    """Mean rate of each scene set at every (n, eta) setting, plus the normalized overall score."""
    rates = pd.DataFrame(index=pd.Index(list(methods), name="method"))
    for n, eta in OVERALL_SETTINGS:
        setting = replace(query, n=n, eta=eta)
        rates[f"n{n}_eta{eta}"] = [
            float(np.mean([scene_relation_rate(s, setting) for s in scenes if len(s) >= n] or [np.nan]))
            for scenes in methods.values()
        ]
    rates["overall"] = overall_relation_score(rates)
    for method, score in rates["overall"].items():
        logger.info(f"Overall regularity of {method}: {score:.4f}")
    return rates


# -- argument parsing ------------------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _path_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tidyroom", description="Scene rearrangement by iterative denoising")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (default: RR_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler: Callable[[RunConfig], None], defaults: dict, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="JSON config file")
        p.set_defaults(handler=handler, defaults=defaults)
        return p

    p = command("generate", cmd_generate, GENERATE_DEFAULTS, "generate clean Table-Chair scenes")
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = command("perturb", cmd_perturb, PERTURB_DEFAULTS, "perturb a directory of scenes")
    p.add_argument("--scenes")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=["bimodal", "fixed"])
    p.add_argument("--sigma-t", dest="sigma_t", type=float)
    p.add_argument("--sigma-r", dest="sigma_r", type=float)
    p.add_argument("--large-probability", dest="large_probability", type=float)
    p.add_argument("--only-classes", dest="only_classes", type=_int_list)

    train_defaults = TrainConfig().to_dict()
    p = command("train", cmd_train, train_defaults, "train a denoiser")
    p.add_argument("--source")
    p.add_argument("--steps", dest="step_count", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="out_dir")

    p = command("denoise", cmd_denoise, DENOISE_DEFAULTS, "rearrange a scene file or directory")
    p.add_argument("--scene")
    p.add_argument("--checkpoint")
    p.add_argument("--out")
    p.add_argument("--preset", choices=["living_room", "bedroom", "table_chair"])
    p.add_argument("--variant", choices=[v.value for v in InferenceVariant])
    p.add_argument("--seed", type=int)

    p = command("eval", cmd_eval, EVAL_DEFAULTS, "score denoised scenes")
    p.add_argument("--pred")
    p.add_argument("--gt")
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--out")
    p.add_argument("--eta", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)

    p = command("render", cmd_render, RENDER_DEFAULTS, "draw a scene or trajectory as SVG")
    p.add_argument("--input")
    p.add_argument("--out")
    p.add_argument("--size", type=int)

    p = command("score-regularity", cmd_score_regularity, SCORE_DEFAULTS, "integer-relation rates of scenes")
    p.add_argument("--scenes")
    p.add_argument("--out")
    p.add_argument("--n", type=int, choices=[2, 3])
    p.add_argument("--eta", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-levels", dest="noise_levels", type=_float_list)
    p.add_argument("--compare", type=_path_list, help="comma-separated scene directories scored against --scenes")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    level = (args.log_level or os.getenv("RR_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=level, format=LOG_FORMAT)

    collector = WarningCollector(args.command)
    logging.getLogger().addHandler(collector)
    ignored = {"command", "handler", "defaults", "config", "log_level"}
    flags = {k: v for k, v in vars(args).items() if k not in ignored}
    try:
        run = resolve(args.command, args.defaults, args.config, flags)
        logger.info(f"Running {run.command}; overridden settings: {run.overrides() or 'none'}")
        args.handler(run)
    except (RearrangeError, OSError, ValueError, FloatingPointError) as exc:
        print(format_error(exc), file=sys.stderr)
        return 1
    finally:
        logging.getLogger().removeHandler(collector)
        report_warnings(collector)
    return 0


if __name__ == "__main__":
    sys.exit(main())
