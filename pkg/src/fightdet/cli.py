"""``fightdet`` command line.

stdout carries only tab-separated result lines; diagnostics go to stderr.
Exit codes: 0 success, 1 usage, 2 input/data error, 3 numeric divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigurationError, DivergenceError, FightDetError
from .features import FeatureSequence, get_backbone, write_features
from .frames import (
    bicubic_resize,
    cut_clip,
    load_frame_dir,
    sample_clip,
    sampled_frame_names,
    write_frame_dir,
)
from .model import CLASSES, VARIANTS, ModelConfig, model_forward
from .training import (
    FeatureLoader,
    TrainConfig,
    evaluate,
    load_manifest,
    make_loader,
    parse_grid,
    run_experiment,
    run_grid,
    split_dataset,
)

log = logging.getLogger("fightdet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
FRAME_CHOICES = (5, 10)
BACKBONE_NAMES = ("vgg16-fc2", "xception-gap", "fight-cnn-fc1", "toy-8x8")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _out(*fields) -> None:
    print("\t".join(str(f) for f in fields))


def _err(message) -> None:
    sys.stderr.write(f"fightdet: error: {message}\n")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backbone", default="toy-8x8", choices=BACKBONE_NAMES)
    p.add_argument("--frames", type=int, default=10, choices=FRAME_CHOICES)
    p.add_argument("--dim", type=int, default=None,
                   help="feature width for backbones where it is configurable")
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=None,
                   help="default: 10 for fight-cnn-fc1 features, 100 otherwise")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--optimizer", default="adam", choices=("adam", "sgd"))
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feature-seed", type=int, default=0)
    p.add_argument("--normalize", default="none", choices=("none", "l2"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fightdet", description="Fight detection from clip features.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--config", default=None,
                        help="JSON file of flag defaults; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="uniformly sample and resize frames")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--frames", type=int, default=10, choices=FRAME_CHOICES)
    p.add_argument("--size", type=int, default=None, help="square output size (default: keep)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("cut", help="cut a fixed-length clip from a frame directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--fps", type=float, required=True)
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--duration", type=float, default=2.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("extract", help="toy features for a frame directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--backbone", default="toy-8x8", choices=BACKBONE_NAMES)
    p.add_argument("--frames", type=int, default=10, choices=FRAME_CHOICES)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--feature-seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("import-features", help="convert .npy or text features to FVS1")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--backbone", default="xception-gap", choices=BACKBONE_NAMES)
    p.add_argument("--frames", type=int, default=10, choices=FRAME_CHOICES)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train one classifier and write a checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--classifier", default="bilstm_attn", choices=VARIANTS)
    _add_model_flags(p)
    p.add_argument("--init", default="glorot", choices=("glorot", "zeros"))
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--subset", default="all", choices=("all", "train", "test"))
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=None,
                   help="split seed (default: the model's training seed)")

    p = sub.add_parser("grid", help="run a backbone x classifier x frames grid")
    p.add_argument("--manifest", required=True)
    p.add_argument("--grid", required=True,
                   help="grid file or inline 'backbones=..;classifiers=..;frames=10,5'")
    _add_model_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="classify one clip")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: List[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        values = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config file {args.config}: {exc}") from exc
    if not isinstance(values, dict):
        raise UsageError("config file must hold a JSON object")
    values = {k.replace("-", "_"): v for k, v in values.items()}
    unknown = [k for k in values if not hasattr(args, k)]
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {', '.join(sorted(unknown))}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    sub.set_defaults(**values)
    return parser.parse_args(argv)


def model_config_from_args(args, variant: str) -> ModelConfig:
    spec = get_backbone(args.backbone, args.dim)
    return ModelConfig(
        variant=variant,
        input_dim=spec.feature_dim,
        hidden_size=args.hidden,
        frames=args.frames,
        dropout_rate=args.dropout,
        seed=args.seed,
        backbone=args.backbone,
        feature_seed=args.feature_seed,
        normalize=args.normalize,
    )


def train_config_from_args(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        optimizer=args.optimizer,
        seed=args.seed,
        split_fraction=args.split,
        frames=args.frames,
    )


def cmd_sample(args) -> int:
    seq = load_frame_dir(args.input)
    clip = sample_clip(seq, args.frames)
    frames = clip.frames
    if args.size is not None:
        if args.size < 1:
            raise UsageError("--size must be >= 1")
        frames = [bicubic_resize(f, args.size, args.size) for f in frames]
    write_frame_dir(frames, args.out, sampled_frame_names(clip.indices))
    _out("indices", ",".join(map(str, clip.indices)))
    return EXIT_OK


def cmd_cut(args) -> int:
    seq = load_frame_dir(args.input, fps=args.fps)
    out = cut_clip(seq, args.start, args.duration)
    write_frame_dir(out.frames, args.out)
    _out("frames", len(out))
    return EXIT_OK


def cmd_extract(args) -> int:
    spec = get_backbone(args.backbone, args.dim)
    loader = FeatureLoader(spec, args.frames, args.feature_seed)
    seq = loader.load_path(args.input, Path(args.input).name)
    write_features(seq, args.out)
    _out("features", f"{seq.k}x{seq.d}")
    return EXIT_OK


def cmd_import_features(args) -> int:
    spec = get_backbone(args.backbone, args.dim)
    path = Path(args.input)
    try:
        m = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, ndmin=2)
    except (OSError, ValueError) as exc:
        raise FightDetError(f"cannot read {path}: {exc}") from exc
    m = np.asarray(m, dtype=np.float64)
    seq = FeatureSequence(m.astype(np.float32), spec.name, path.stem)
    FeatureLoader(spec, args.frames).check(seq, path.stem)
    write_features(seq, args.out)
    _out("features", f"{seq.k}x{seq.d}")
    return EXIT_OK


def cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    config = model_config_from_args(args, args.classifier)
    cfg = train_config_from_args(args)
    result = run_experiment(manifest, config, cfg, init=args.init)
    save_checkpoint(args.out, config, result.params)
    history = result.train_report.loss_history
    log.info("batch size %d, %d epochs", result.batch_size, cfg.epochs)
    if history:
        _out("loss", repr(history[-1]))
    _out("train_accuracy", repr(result.train_report.accuracy))
    _out("accuracy", repr(result.test_report.accuracy))
    return EXIT_OK


def cmd_eval(args) -> int:
    config, params = load_checkpoint(args.model)
    manifest = load_manifest(args.manifest)
    if args.subset != "all":
        seed = config.seed if args.seed is None else args.seed
        train_m, test_m = split_dataset(manifest, args.split, seed)
        manifest = train_m if args.subset == "train" else test_m
    samples = make_loader(config).load(manifest)
    report = evaluate(config, params, samples)
    _out("accuracy", repr(report.accuracy))
    c = report.confusion
    _out("confusion", c[0][0], c[0][1], c[1][0], c[1][1])
    return EXIT_OK


def cmd_grid(args) -> int:
    text = args.grid
    if Path(text).is_file():
        text = Path(text).read_text(encoding="utf-8")
    try:
        grid = parse_grid(text)
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from exc
    manifest = load_manifest(args.manifest)
    template = model_config_from_args(args, "bilstm_attn")
    cfg = train_config_from_args(args)
    dims = {b: args.dim for b in grid.backbones if args.dim and b in ("fight-cnn-fc1", "toy-8x8")}
    table = run_grid(grid, manifest, cfg, template, dims)
    tsv = table.to_tsv()
    Path(args.out).write_text(tsv, encoding="utf-8")
    sys.stderr.write(table.render_text())
    sys.stdout.write(tsv)
    return EXIT_OK


def cmd_predict(args) -> int:
    config, params = load_checkpoint(args.model)
    loader = make_loader(config)
    seq = loader.load_path(args.input, Path(args.input).name)
    probs = model_forward(seq, config, params)[0]
    label = 1 if probs[1] > probs[0] else 0
    _out(CLASSES[label], f"{float(probs[label]):.6f}")
    return EXIT_OK


COMMANDS = {
    "sample": cmd_sample,
    "cut": cmd_cut,
    "extract": cmd_extract,
    "import-features": cmd_import_features,
    "train": cmd_train,
    "eval": cmd_eval,
    "grid": cmd_grid,
    "predict": cmd_predict,
}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        _err(exc)
        return EXIT_USAGE
    except DivergenceError as exc:
        _err(f"training diverged: {exc}")
        return EXIT_DIVERGED
    except ConfigurationError as exc:
        _err(exc)
        return EXIT_USAGE
    except (FightDetError, OSError) as exc:
        _err(exc)
        return EXIT_DATA

if __name__ == "__main__":
    sys.exit(main())
