"""Command-line surface for the full pipeline.

Subcommands: simulate, train, eval, sweep, saliency, track.  Option
precedence is defaults < --config JSON < explicit flags, and every run
echoes its fully resolved configuration to ``<out>/run_config.json``
before doing any work, so any artifact can be regenerated from its out
directory alone.  On failure a JSON error record goes to stderr and the
exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import viz
from .data import SampleSet, SynthesisConfig, load_dataset, save_dataset, synthesize_dataset
from .evaluation import calibration, evaluate_model, noise_sweep, track_sequence
from .network import ModelConfig, load_checkpoint, save_checkpoint
from .noise import _poisson_scaled, derive_noise_seed
from .tensorio import read_json, read_tensor, write_json
from .training import (
    EVAL_STREAM,
    TrainConfig,
    TwoStagePipeline,
    train,
    train_joint_baseline,
    train_sequential_baseline,
)

_COMMON_DEFAULTS = {
    "seed": 0,
    "lambda_": 2.5,
    "plots": False,
}


def _resolve(args, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        file_cfg = read_json(args.config)
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in cfg:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    return cfg


def _start_run(cfg: dict, command: str) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    echo = {"command": command, **{k: v for k, v in cfg.items() if k != "out"}}
    echo["out"] = str(cfg["out"])
    write_json(out / "run_config.json", echo)
    return out


def _split_dataset(ds: SampleSet, n_train: int, n_val: int):
    if n_train + n_val > len(ds):
        raise ValueError(
            f"dataset has {len(ds)} samples; need n_train + n_val = {n_train + n_val}")
    return ds.subset(range(n_train)), ds.subset(range(n_train, n_train + n_val))


def cmd_simulate(args) -> int:
    defaults = {
        **_COMMON_DEFAULTS,
        "n_samples": 100,
        "image_size": 128,
        "pitch": 12.0,
        "depth_cap": 10,
        "base_depth_min": 3,
        "base_depth_max": 10,
        "occupancy": 1.0,
        "out": None,
    }
    cfg = _resolve(args, defaults)
    out = _start_run(cfg, "simulate")
    synth = SynthesisConfig(
        n_samples=int(cfg["n_samples"]),
        seed=int(cfg["seed"]),
        image_shape=(int(cfg["image_size"]), int(cfg["image_size"])),
        pitch=float(cfg["pitch"]),
        depth_cap=int(cfg["depth_cap"]),
        base_depth_range=(int(cfg["base_depth_min"]), int(cfg["base_depth_max"])),
        occupancy=float(cfg["occupancy"]),
    )
    ds = synthesize_dataset(synth)
    save_dataset(ds, out)
    if cfg["plots"]:
        noisy = _poisson_scaled(ds.clean[0], cfg["lambda_"],
                                derive_noise_seed(cfg["seed"], ds.seeds[0], 0, EVAL_STREAM))
        viz.save_image_grid(
            [("clean", ds.clean[0]), (f"noisy (λ={cfg['lambda_']})", noisy),
             ("labels", ds.labels[0]), ("weights", ds.weights[0])],
            out / "preview.png")
    print(f"wrote {len(ds)} samples to {out}")
    return 0


def _model_config_from(cfg: dict) -> ModelConfig:
    return ModelConfig(
        base_channels=int(cfg["base_channels"]),
        scales=int(cfg["scales"]),
        num_classes=int(cfg["num_classes"]),
        median_kernel=int(cfg["median_kernel"]),
        upsample=cfg["upsample"],
    )


def cmd_train(args) -> int:
    defaults = {
        **_COMMON_DEFAULTS,
        "data": None,
        "n_train": 500,
        "n_val": 100,
        "batch_size": 8,
        "max_epochs": 200,
        "lr": 1e-3,
        "patience": 10,
        "base_channels": 16,
        "scales": 6,
        "num_classes": 11,
        "median_kernel": 4,
        "upsample": "bilinear",
        "baseline": "direct",
        "out": None,
    }
    cfg = _resolve(args, defaults)
    out = _start_run(cfg, "train")
    ds = load_dataset(cfg["data"])
    train_set, val_set = _split_dataset(ds, int(cfg["n_train"]), int(cfg["n_val"]))
    model_config = _model_config_from(cfg)
    train_config = TrainConfig(
        lambda_=float(cfg["lambda_"]),
        batch_size=int(cfg["batch_size"]),
        max_epochs=int(cfg["max_epochs"]),
        lr=float(cfg["lr"]),
        patience=int(cfg["patience"]),
        seed=int(cfg["seed"]),
        n_train=int(cfg["n_train"]),
        n_val=int(cfg["n_val"]),
    )
    if cfg["baseline"] == "direct":
        params, record = train(train_config, model_config, train_set, val_set, verbose=True)
        save_checkpoint(params, out / "checkpoint")
        record.to_csv(out / "train_record.csv")
    elif cfg["baseline"] == "sequential":
        pipeline, records = train_sequential_baseline(
            train_config, model_config, train_set, val_set, verbose=True)
        save_checkpoint(pipeline.denoiser, out / "denoiser")
        save_checkpoint(pipeline.segmenter, out / "checkpoint")
        records["denoiser"].to_csv(out / "denoiser_record.csv")
        records["segmenter"].to_csv(out / "train_record.csv")
    elif cfg["baseline"] == "joint":
        pipeline, records = train_joint_baseline(
            train_config, model_config, train_set, val_set, verbose=True)
        save_checkpoint(pipeline.denoiser, out / "denoiser")
        save_checkpoint(pipeline.segmenter, out / "checkpoint")
        records["joint"].to_csv(out / "train_record.csv")
    else:
        raise ValueError(f"unknown baseline {cfg['baseline']!r}")
    print(f"training done; artifacts in {out}")
    return 0


def _load_model_like(checkpoint: str, denoiser: str | None):
    params = load_checkpoint(checkpoint)
    if denoiser:
        return TwoStagePipeline(denoiser=load_checkpoint(denoiser), segmenter=params)
    return params


def cmd_eval(args) -> int:
    defaults = {
        **_COMMON_DEFAULTS,
        "checkpoint": None,
        "denoiser": None,
        "data": None,
        "raw_labels": False,
        "calibration_bins": 10,
        "out": None,
    }
    cfg = _resolve(args, defaults)
    out = _start_run(cfg, "eval")
    model_like = _load_model_like(cfg["checkpoint"], cfg["denoiser"])
    ds = load_dataset(cfg["data"])
    report, estimates, truths = evaluate_model(
        model_like, ds, float(cfg["lambda_"]), seed=int(cfg["seed"]),
        use_raw_labels=bool(cfg["raw_labels"]), return_estimates=True)
    curve = calibration(estimates, truths, n_bins=int(cfg["calibration_bins"]))
    write_json(out / "eval_report.json", report.to_json_dict())
    write_json(out / "calibration.json", curve.to_json_dict())
    if cfg["plots"]:
        viz.plot_confusion(report.confusion, out / "confusion.png")
        viz.plot_reliability(curve, out / "reliability.png")
    print(json.dumps({k: v for k, v in report.to_json_dict().items() if k != "confusion"},
                     indent=2, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    defaults = {
        **_COMMON_DEFAULTS,
        "checkpoints": None,
        "data": None,
        "lambdas": "0.25,2.5,10.0",
        "raw_labels": False,
        "out": None,
    }
    cfg = _resolve(args, defaults)
    out = _start_run(cfg, "sweep")
    ckpts = cfg["checkpoints"]
    if isinstance(ckpts, str):
        ckpts = ckpts.split(",")
    models = [load_checkpoint(c) for c in ckpts]
    lambdas = [float(v) for v in str(cfg["lambdas"]).split(",")]
    ds = load_dataset(cfg["data"])
    table = noise_sweep(models, lambdas, ds, seed=int(cfg["seed"]),
                        use_raw_labels=bool(cfg["raw_labels"]))
    table.to_csv(out / "sweep.csv")
    if cfg["plots"]:
        viz.plot_sweep(table, out / "sweep.png")
    print(f"wrote {len(table.rows)} sweep rows to {out / 'sweep.csv'}")
    return 0


def cmd_saliency(args) -> int:
    from .noise import NoisyImage
    from .saliency import gradient_spread, input_gradient

    defaults = {
        **_COMMON_DEFAULTS,
        "checkpoint": None,
        "data": None,
        "index": 0,
        "image": None,
        "pixel": None,
        "depth": None,
        "out": None,
    }
    cfg = _resolve(args, defaults)
    out = _start_run(cfg, "saliency")
    params = load_checkpoint(cfg["checkpoint"])
    if cfg["image"]:
        y = read_tensor(cfg["image"])
    else:
        ds = load_dataset(cfg["data"])
        i = int(cfg["index"])
        seed = derive_noise_seed(int(cfg["seed"]), ds.seeds[i], 0, EVAL_STREAM)
        y = NoisyImage(_poisson_scaled(ds.clean[i], float(cfg["lambda_"]), seed),
                       float(cfg["lambda_"]), seed)
    pr, pc = (int(v) for v in str(cfg["pixel"]).split(","))
    smap = input_gradient(params, y, (pr, pc), int(cfg["depth"]))
    smap.save(out / "saliency.tns")
    spread = gradient_spread(smap)
    write_json(out / "saliency_summary.json",
               {"pixel": [pr, pc], "depth": int(cfg["depth"]),
                "lambda": float(cfg["lambda_"]), "spread_px": spread})
    if cfg["plots"]:
        viz.plot_saliency(smap, out / "saliency.png")
    print(f"gradient spread: {spread:.2f} px")
    return 0


def cmd_track(args) -> int:
    defaults = {
        **_COMMON_DEFAULTS,
        "checkpoint": None,
        "frames": None,
        "pixels": None,
        "out": None,
    }
    cfg = _resolve(args, defaults)
    out = _start_run(cfg, "track")
    params = load_checkpoint(cfg["checkpoint"])
    frame_dir = Path(cfg["frames"])
    paths = sorted(frame_dir.glob("*.tns"))
    if not paths:
        raise ValueError(f"no .tns frames found in {frame_dir}")
    frames = [read_tensor(p) for p in paths]
    pixels = [tuple(int(v) for v in part.split(",")) for part in str(cfg["pixels"]).split(";")]
    result = track_sequence(params, frames, pixels)
    for k, (r, c) in enumerate(result.pixels):
        result.to_csv(k, out / f"track_r{r}_c{c}.csv")
        if cfg["plots"]:
            viz.plot_track(result, k, out / f"track_r{r}_c{c}.png")
    print(f"tracked {len(pixels)} pixels over {result.n_frames} frames -> {out}")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with option defaults")
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda", dest="lambda_", type=float, help="noise parameter")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--plots", action=argparse.BooleanOptionalAction,
                   help="emit plot images alongside data artifacts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depthseg",
        description="atomic-column depth estimation via per-pixel depth segmentation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--image-size", dest="image_size", type=int)
    p.add_argument("--pitch", type=float)
    p.add_argument("--depth-cap", dest="depth_cap", type=int)
    p.add_argument("--base-depth-min", dest="base_depth_min", type=int)
    p.add_argument("--base-depth-max", dest="base_depth_max", type=int)
    p.add_argument("--occupancy", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the segmentation network (or a baseline)")
    _add_common(p)
    p.add_argument("--data", help="dataset directory from `simulate`")
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-val", dest="n_val", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--base-channels", dest="base_channels", type=int)
    p.add_argument("--scales", type=int)
    p.add_argument("--num-classes", dest="num_classes", type=int)
    p.add_argument("--median-kernel", dest="median_kernel", type=int)
    p.add_argument("--upsample", choices=("bilinear", "transposed"))
    p.add_argument("--baseline", choices=("direct", "sequential", "joint"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    _add_common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--denoiser", help="optional denoiser checkpoint (two-stage eval)")
    p.add_argument("--data")
    p.add_argument("--raw-labels", dest="raw_labels", action=argparse.BooleanOptionalAction)
    p.add_argument("--calibration-bins", dest="calibration_bins", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="evaluate checkpoints across noise levels")
    _add_common(p)
    p.add_argument("--checkpoints", nargs="+")
    p.add_argument("--data")
    p.add_argument("--lambdas", help="comma-separated noise parameters")
    p.add_argument("--raw-labels", dest="raw_labels", action=argparse.BooleanOptionalAction)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("saliency", help="input gradient of one output probability")
    _add_common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--index", type=int, help="sample index within --data")
    p.add_argument("--image", help=".tns image used directly as network input")
    p.add_argument("--pixel", help="output pixel as 'row,col'")
    p.add_argument("--depth", type=int)
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("track", help="trace depth probabilities over an image sequence")
    _add_common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--frames", help="directory of .tns frames (sorted by name)")
    p.add_argument("--pixels", help="output pixels as 'r,c;r,c;...'")
    p.set_defaults(func=cmd_track)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
