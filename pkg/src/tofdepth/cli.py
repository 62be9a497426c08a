"""Command-line pipeline driver.

Subcommands: synth, train, infer, eval, noise-sweep, ablation. Each takes
an optional JSON config (--config) whose fields individual flags override.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
error. Thread count for the numeric backend comes from TOFDEPTH_THREADS,
which must be applied before numpy loads, hence the lazy imports below.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import ConfigError, DataError, NumericError

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _configure_threads() -> None:
    value = os.environ.get("TOFDEPTH_THREADS")
    if value:
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ.setdefault(var, value)


def _read_json_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}, expected {SCHEMA_VERSION}")
    return data


def _check_keys(data: dict, allowed, what: str) -> None:
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {what} fields: {sorted(unknown)}")


def _require_out(args, cfg) -> Path:
    out = args.out or cfg.get("out")
    if not out:
        raise ConfigError("an output directory is required (--out or config 'out')")
    return Path(out).resolve()


def _require_input_path(value, what: str) -> Path:
    if not value:
        raise ConfigError(f"{what} is required")
    path = Path(value).resolve()
    if not path.exists():
        raise DataError(f"{what} {path} does not exist")
    return path


def _scene_spec(data: dict):
    from dataclasses import fields

    from .synthetic import SceneSpec

    allowed = {f.name for f in fields(SceneSpec)}
    _check_keys(data, allowed, "scene spec")
    data = dict(data)
    for key in ("background_depth_mm", "clearance_mm", "alpha_range", "object_fraction"):
        if key in data:
            data[key] = tuple(data[key])
    return SceneSpec(**data)


def _network_config(data: dict):
    import dataclasses

    from .model import NetworkConfig

    data = dict(data)
    preset = data.pop("preset", "default")
    builders = {
        "default": NetworkConfig.default,
        "desk": NetworkConfig.desk,
        "single_scale": NetworkConfig.single_scale,
        "batch_norm": NetworkConfig.with_batch_norm,
    }
    if preset not in builders:
        raise ConfigError(f"unknown network preset {preset!r}, want one of {sorted(builders)}")
    base = builders[preset]()
    allowed = {f.name for f in dataclasses.fields(NetworkConfig)}
    _check_keys(data, allowed, "network config")
    if "groups" in data:
        data["groups"] = tuple(tuple(g) for g in data["groups"])
    return dataclasses.replace(base, **data)


def _channels_for(net_config):
    from .patches import SINGLE_SCALE_CHANNELS

    return SINGLE_SCALE_CHANNELS if net_config.input_channels == 2 else None


def _canonical(cfg: dict) -> dict:
    return json.loads(json.dumps(cfg, sort_keys=True))


def cmd_synth(args) -> int:
    cfg = _read_json_config(args.config) if args.config else {}
    _check_keys(cfg, {"scenes", "seed", "scene", "shapes", "out"}, "synth config")
    from .scenes import write_manifest, write_scene
    from .synthetic import SHAPES, SceneSetSpec, generate_scene_set

    count = args.scenes if args.scenes is not None else int(cfg.get("scenes", 48))
    if count < 0:
        raise ConfigError(f"scene count must be non-negative, got {count}")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out = _require_out(args, cfg)
    spec = SceneSetSpec(
        count=count,
        scene=_scene_spec(cfg.get("scene", {})),
        shapes=tuple(cfg.get("shapes", SHAPES)),
    )
    resolved = {
        "command": "synth",
        "scenes": count,
        "seed": seed,
        "scene": cfg.get("scene", {}),
        "shapes": list(spec.shapes),
    }
    out.mkdir(parents=True, exist_ok=True)
    dirs = []
    for i, sample in enumerate(generate_scene_set(spec, seed)):
        scene_dir = out / f"scene_{i:03d}"
        write_scene(sample, scene_dir)
        dirs.append(scene_dir)
    write_manifest(out, dirs, config_echo=_canonical(resolved))
    print(f"synth: wrote {count} scenes under {out}")
    return EXIT_OK


def _load_scenes(data_dir):
    from .scenes import load_scene_tree

    return load_scene_tree(_require_input_path(data_dir, "data_dir"))


def _build_patchset(cfg, scenes, seed):
    from .patches import build_training_set

    return build_training_set(
        scenes,
        max_per_scene=cfg.get("max_per_scene"),
        augment_flip=bool(cfg.get("augment_flip", True)),
        seed=seed,
    )


TRAIN_KEYS = {
    "data_dir",
    "out",
    "network",
    "train",
    "max_per_scene",
    "augment_flip",
    "val_fraction",
}


def cmd_train(args) -> int:
    cfg = _read_json_config(args.config) if args.config else {}
    _check_keys(cfg, TRAIN_KEYS, "train config")
    from .patches import PatchSet
    from .training import TrainConfig, evaluate_epoch, split_scenes, train

    data_dir = args.data_dir or cfg.get("data_dir")
    out = _require_out(args, cfg)
    net_config = _network_config(cfg.get("network", {}))
    train_cfg = TrainConfig.from_dict(cfg.get("train", {}))
    if args.seed is not None:
        train_cfg = TrainConfig.from_dict({**train_cfg.to_dict(), "seed": args.seed})
    scenes = _load_scenes(data_dir)
    val_fraction = float(cfg.get("val_fraction", 0.05))
    train_scenes, val_scenes = split_scenes(scenes, val_fraction, seed=train_cfg.seed)
    patchset = _build_patchset(cfg, train_scenes, train_cfg.seed)
    channels = _channels_for(net_config)
    if channels is not None:
        patchset = patchset.select_channels(channels)
    out.mkdir(parents=True, exist_ok=True)
    net, log = train(train_cfg, net_config, patchset, checkpoint_dir=out)
    resolved = {
        "command": "train",
        "data_dir": str(Path(data_dir).resolve()),
        "network": net_config.to_dict(),
        "train": train_cfg.to_dict(),
        "max_per_scene": cfg.get("max_per_scene"),
        "augment_flip": bool(cfg.get("augment_flip", True)),
        "val_fraction": val_fraction,
    }
    log.to_csv(out / "train_log.csv", config=_canonical(resolved))
    val_patches = _build_patchset(cfg, val_scenes, train_cfg.seed + 1)
    if channels is not None:
        val_patches = val_patches.select_channels(channels)
    val_loss = evaluate_epoch(net, val_patches, beta=train_cfg.loss_beta)
    print(
        f"train: {log.rows[-1]['step']} steps, final train loss "
        f"{log.rows[-1]['mean_loss']:.6g}, val loss {val_loss:.6g}, "
        f"checkpoint {log.last_checkpoint}"
    )
    return EXIT_OK


def cmd_infer(args) -> int:
    cfg = _read_json_config(args.config) if args.config else {}
    _check_keys(
        cfg, {"checkpoint", "raw", "background", "mask", "batch_mode", "out", "png"}, "infer config"
    )
    from .checkpoint import load_checkpoint
    from .depthmap import read_depth_pgm, read_mask_pgm, write_depth_pgm
    from .evaluation import infer_depth_map, save_false_color_png

    ckpt = _require_input_path(args.checkpoint or cfg.get("checkpoint"), "checkpoint")
    raw_path = _require_input_path(args.raw or cfg.get("raw"), "raw map")
    bg_path = _require_input_path(args.background or cfg.get("background"), "background map")
    mask_path = _require_input_path(args.mask or cfg.get("mask"), "mask")
    out = _require_out(args, cfg)
    batch_mode = args.batch_mode or cfg.get("batch_mode", "chunk")

    net, _ = load_checkpoint(ckpt)
    raw = read_depth_pgm(raw_path)
    background = read_depth_pgm(bg_path)
    mask = read_mask_pgm(mask_path)
    restored = infer_depth_map(
        net,
        raw,
        background,
        mask,
        batch_mode=batch_mode,
        channels=_channels_for(net.config),
    )
    resolved = {
        "command": "infer",
        "checkpoint": str(ckpt),
        "raw": str(raw_path),
        "background": str(bg_path),
        "mask": str(mask_path),
        "batch_mode": batch_mode,
    }
    out.mkdir(parents=True, exist_ok=True)
    comment = "config: " + json.dumps(_canonical(resolved), sort_keys=True, separators=(",", ":"))
    write_depth_pgm(restored, out / "restored.pgm", comment=comment)
    if args.png or cfg.get("png"):
        save_false_color_png(restored, out / "restored.png")
    print(f"infer: wrote {out / 'restored.pgm'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _read_json_config(args.config) if args.config else {}
    _check_keys(cfg, {"checkpoint", "data_dir", "out", "model_name"}, "eval config")
    from .checkpoint import load_checkpoint
    from .evaluation import compare_variants, write_metrics_csv

    ckpt = _require_input_path(args.checkpoint or cfg.get("checkpoint"), "checkpoint")
    scenes = _load_scenes(args.data_dir or cfg.get("data_dir"))
    out = _require_out(args, cfg)
    net, _ = load_checkpoint(ckpt)
    name = cfg.get("model_name", "proposed")
    rows = compare_variants(scenes, [(name, net, _channels_for(net.config))])
    resolved = {
        "command": "eval",
        "checkpoint": str(ckpt),
        "data_dir": str(Path(args.data_dir or cfg.get("data_dir")).resolve()),
        "model_name": name,
    }
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(
        out / "metrics.csv",
        rows,
        columns=("model", "scene_class", "filtered"),
        config=_canonical(resolved),
    )
    (out / "metrics.json").write_text(
        json.dumps([r.to_dict() for r in rows], sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    print(f"eval: wrote {out / 'metrics.csv'} ({len(rows)} rows)")
    return EXIT_OK


def cmd_noise_sweep(args) -> int:
    cfg = _read_json_config(args.config) if args.config else {}
    _check_keys(cfg, {"checkpoint", "data_dir", "sigmas", "seed", "out"}, "noise-sweep config")
    from .checkpoint import load_checkpoint
    from .evaluation import DEFAULT_NOISE_SIGMAS, noise_sweep, write_metrics_csv

    ckpt = _require_input_path(args.checkpoint or cfg.get("checkpoint"), "checkpoint")
    scenes = _load_scenes(args.data_dir or cfg.get("data_dir"))
    out = _require_out(args, cfg)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    if args.sigmas is not None:
        sigmas = [float(s) for s in args.sigmas.split(",")]
    else:
        sigmas = [float(s) for s in cfg.get("sigmas", DEFAULT_NOISE_SIGMAS)]
    net, _ = load_checkpoint(ckpt)
    rows = noise_sweep(net, scenes, sigmas=sigmas, seed=seed, channels=_channels_for(net.config))
    resolved = {
        "command": "noise-sweep",
        "checkpoint": str(ckpt),
        "sigmas": sigmas,
        "seed": seed,
    }
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "noise_sweep.csv", rows, columns=("sigma",), config=_canonical(resolved))
    print(f"noise-sweep: wrote {out / 'noise_sweep.csv'} ({len(rows)} sigma levels)")
    return EXIT_OK


ABLATION_VARIANTS = ("proposed", "batch_norm", "single_scale")


def cmd_ablation(args) -> int:
    cfg = _read_json_config(args.config) if args.config else {}
    _check_keys(cfg, TRAIN_KEYS | {"variants"}, "ablation config")
    import dataclasses

    from .checkpoint import save_checkpoint
    from .evaluation import compare_variants, write_metrics_csv
    from .patches import SINGLE_SCALE_CHANNELS
    from .training import TrainConfig, split_scenes, train

    out = _require_out(args, cfg)
    base_net = _network_config(cfg.get("network", {}))
    train_cfg = TrainConfig.from_dict(cfg.get("train", {}))
    if args.seed is not None:
        train_cfg = TrainConfig.from_dict({**train_cfg.to_dict(), "seed": args.seed})
    variants = tuple(cfg.get("variants", ABLATION_VARIANTS))
    unknown = set(variants) - set(ABLATION_VARIANTS)
    if unknown:
        raise ConfigError(f"unknown ablation variants: {sorted(unknown)}")

    scenes = _load_scenes(args.data_dir or cfg.get("data_dir"))
    val_fraction = float(cfg.get("val_fraction", 0.05))
    train_scenes, val_scenes = split_scenes(scenes, val_fraction, seed=train_cfg.seed)
    patchset = _build_patchset(cfg, train_scenes, train_cfg.seed)

    out.mkdir(parents=True, exist_ok=True)
    models = []
    for variant in variants:
        if variant == "proposed":
            net_cfg = base_net
            channels = None
        elif variant == "batch_norm":
            net_cfg = dataclasses.replace(base_net, use_batch_norm=True)
            channels = None
        else:
            net_cfg = dataclasses.replace(base_net, input_channels=2)
            channels = SINGLE_SCALE_CHANNELS
        data = patchset if channels is None else patchset.select_channels(channels)
        net, _ = train(train_cfg, net_cfg, data, checkpoint_dir=None)
        save_checkpoint(net, out / f"{variant}.tofr")
        models.append((variant, net, channels))
        print(f"ablation: trained {variant}")
    rows = compare_variants(val_scenes, models)
    resolved = {
        "command": "ablation",
        "data_dir": str(Path(args.data_dir or cfg.get("data_dir")).resolve()),
        "network": base_net.to_dict(),
        "train": train_cfg.to_dict(),
        "variants": list(variants),
        "val_fraction": val_fraction,
    }
    write_metrics_csv(
        out / "ablation.csv",
        rows,
        columns=("model", "scene_class", "filtered"),
        config=_canonical(resolved),
    )
    print(f"ablation: wrote {out / 'ablation.csv'} ({len(rows)} rows)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tofdepth",
        description="Depth restoration for translucent objects in ToF-style depth maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic scene tree")
    common(p)
    p.add_argument("--scenes", type=int, help="number of scenes")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a scene tree")
    common(p)
    p.add_argument("--data-dir", help="scene tree root")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="restore one depth map")
    common(p)
    p.add_argument("--checkpoint", help="trained model checkpoint")
    p.add_argument("--raw", help="raw depth PGM")
    p.add_argument("--background", help="background depth PGM")
    p.add_argument("--mask", help="object mask PGM")
    p.add_argument("--batch-mode", choices=("chunk", "column", "single"))
    p.add_argument("--png", action="store_true", help="also write a false-color PNG")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="metrics of a checkpoint over a scene tree")
    common(p)
    p.add_argument("--checkpoint", help="trained model checkpoint")
    p.add_argument("--data-dir", help="scene tree root")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("noise-sweep", help="noise-robustness table")
    common(p)
    p.add_argument("--checkpoint", help="trained model checkpoint")
    p.add_argument("--data-dir", help="scene tree root")
    p.add_argument("--sigmas", help="comma-separated noise sigmas in mm")
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("ablation", help="train and compare model variants")
    common(p)
    p.add_argument("--data-dir", help="scene tree root")
    p.set_defaults(func=cmd_ablation)

    return parser


def main(argv=None) -> int:
    _configure_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"tofdepth: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"tofdepth: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"tofdepth: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
