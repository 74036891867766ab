"""Command-line entry point: ``cocoanet {split,train,eval,predict,info}``.

Exit codes: 0 success, 2 usage or input error, 3 runtime failure. Logs go to
stderr; metrics go to files.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import CLASS_NAMES
from .architectures import ArchitectureSpec, build, count_parameters, forward_classify, parameter_breakdown
from .config import ConfigError, load_config
from .data import (DatasetLayoutError, DatasetManifest, ManifestDataset, NormalizationStats,
                   compute_channel_means, format_split_table, preprocess_eval, scan_dataset,
                   stratified_split)
from .evaluation import build_report, render_report
from .training import (CheckpointError, NonFiniteGradientError, TrainingError, evaluate, fit,
                       load_checkpoint, restore_model, save_checkpoint)

log = logging.getLogger("cocoanet")

EXIT_USAGE = 2
EXIT_RUNTIME = 3


class CLIError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _thread_limit():
    """``COCOA_THREADS`` caps BLAS threads; 0 means deterministic single-threaded."""
    value = os.environ.get("COCOA_THREADS")
    if value is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    n = int(value)
    return threadpool_limits(limits=max(n, 1))


def _parse_ratios(text: str):
    try:
        ratios = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise CLIError(f"--ratios must be three comma-separated numbers, got {text!r}") from None
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise CLIError(f"--ratios must be three non-negative numbers summing to 1, got {text!r}")
    return ratios


def _load_manifest(path) -> DatasetManifest:
    if path is None or not Path(path).is_file():
        raise CLIError(f"manifest not found: {path}")
    try:
        return DatasetManifest.load(path)
    except (ValueError, KeyError) as exc:
        raise CLIError(f"invalid manifest {path}: {exc}") from exc


def _data_root(args_root, manifest: DatasetManifest, manifest_path, config_root=None) -> Path:
    root = args_root or config_root or manifest.extra.get("root")
    if root is None:
        root = Path(manifest_path).parent
    return Path(root)


def cmd_split(args) -> int:
    ratios = _parse_ratios(args.ratios)
    if args.from_manifest:
        base = _load_manifest(args.from_manifest)
    else:
        try:
            base = scan_dataset(args.data_dir)
        except DatasetLayoutError as exc:
            raise CLIError(str(exc)) from exc
        base.extra["root"] = str(Path(args.data_dir).resolve())
    try:
        manifest = stratified_split(base, ratios, args.seed)
    except ValueError as exc:
        raise CLIError(str(exc)) from exc
    manifest.save(args.out)
    print(format_split_table(manifest))
    return 0


def _normalization(manifest: DatasetManifest, root: Path) -> NormalizationStats:
    paths = [root / e.path for e in manifest.split("train")]
    log.info("computing channel statistics over %d training images", len(paths))
    return compute_channel_means(paths)


def cmd_train(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        raise CLIError(f"config error: {exc}") from exc
    manifest_path = args.manifest or cfg.manifest
    manifest = _load_manifest(manifest_path)
    root = _data_root(args.data_dir, manifest, manifest_path, cfg.data_root)
    out = Path(args.out_dir or cfg.run_dir or "run")
    out.mkdir(parents=True, exist_ok=True)
    if len(manifest.class_names) != cfg.arch.num_classes:
        raise CLIError(f"manifest has {len(manifest.class_names)} classes but the model has "
                       f"{cfg.arch.num_classes} outputs")
    for split in ("train", "val"):
        if not manifest.split(split):
            raise CLIError(f"manifest {manifest_path} has no {split!r} entries; run `cocoanet split` first")

    stats = _normalization(manifest, root)
    (out / "config.resolved.json").write_text(cfg.to_json(), encoding="utf-8")
    (out / "normalization.json").write_text(json.dumps(stats.to_dict(), indent=2) + "\n",
                                            encoding="utf-8")
    tcfg = cfg.train
    train_set = ManifestDataset(manifest, root, "train", stats, cfg.augmentation, tcfg.seed)
    val_set = ManifestDataset(manifest, root, "val", stats)
    model = build(cfg.arch, tcfg.seed)
    history = []

    def on_epoch(record):
        history.append(record)
        (out / "history.json").write_text(json.dumps(history, indent=2) + "\n", encoding="utf-8")

    try:
        result = fit(model, train_set, val_set, tcfg, stats.to_dict(), manifest.class_names,
                     on_epoch=on_epoch)
    except (TrainingError, NonFiniteGradientError, FloatingPointError) as exc:
        epoch = getattr(exc, "epoch", None) or len(history) + 1
        raise CLIError(f"training failed at epoch {epoch}: {exc}", EXIT_RUNTIME) from exc
    save_checkpoint(out / "best.ckpt", result.best)
    save_checkpoint(out / "last.ckpt", result.last)
    print(f"best epoch {result.best.epoch}: val macro-F1 {result.best.metrics['val_macro_f1']:.2f}; "
          f"checkpoints in {out}")
    return 0


def _restore(path):
    try:
        ckpt = load_checkpoint(path)
        return ckpt, restore_model(ckpt)
    except (CheckpointError, OSError) as exc:
        raise CLIError(f"cannot load checkpoint {path}: {exc}") from exc


def _stats_from(ckpt) -> NormalizationStats:
    if ckpt.normalization:
        return NormalizationStats.from_dict(ckpt.normalization)
    if ckpt.channel_means:
        return NormalizationStats(np.asarray(ckpt.channel_means))
    raise CLIError("checkpoint carries no normalization statistics")


def cmd_eval(args) -> int:
    ckpt, model = _restore(args.checkpoint)
    manifest = _load_manifest(args.manifest)
    names = ckpt.class_names or list(CLASS_NAMES)
    if list(names) != list(manifest.class_names):
        raise CLIError(f"checkpoint classes {names} do not match manifest classes "
                       f"{manifest.class_names}")
    root = _data_root(args.data_dir, manifest, args.manifest)
    try:
        dataset = ManifestDataset(manifest, root, args.split, _stats_from(ckpt))
    except ValueError as exc:
        raise CLIError(str(exc)) from exc
    result = evaluate(model, dataset, args.batch_size)
    report = build_report(result.confusion, names, model=ckpt.arch.family, epoch=ckpt.epoch,
                          split=args.split)
    out = Path(args.report)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_bytes(render_report(report, "json"))
    (out / "report.csv").write_bytes(render_report(report, "csv"))
    text = render_report(report, "text")
    (out / "report.txt").write_bytes(text)
    with open(out / "confusion_matrix.csv", "w", encoding="utf-8") as f:
        f.write("true\\pred," + ",".join(names) + "\n")
        for name, row in zip(names, result.confusion.tolist()):
            f.write(name + "," + ",".join(str(v) for v in row) + "\n")
    sys.stdout.write(text.decode("utf-8"))
    return 0


def cmd_predict(args) -> int:
    ckpt, model = _restore(args.checkpoint)
    try:
        x = preprocess_eval(args.image, _stats_from(ckpt))
    except (OSError, ValueError) as exc:
        raise CLIError(f"cannot read image {args.image}: {exc}") from exc
    probs = forward_classify(model, x[None])[0].astype(np.float64)
    names = ckpt.class_names or list(CLASS_NAMES)
    best = int(np.argmax(probs))
    print(f"prediction: {names[best]}")
    for name, p in zip(names, probs):
        print(f"{name}: {100.0 * p:.2f}")
    return 0


def cmd_info(args) -> int:
    try:
        spec = ArchitectureSpec(args.arch, num_classes=args.classes)
    except ValueError as exc:
        raise CLIError(str(exc)) from exc
    model = build(spec)
    n = count_parameters(model)
    print(f"architecture: {args.arch} ({args.classes} classes)")
    print(f"parameters: {n:,} ({n / 1e6:.2f}M)")
    for stage, count in parameter_breakdown(model).items():
        print(f"  {stage:<12} {count:>14,}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cocoanet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("split", help="scan a dataset and write a stratified train/val/test manifest")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--data-dir", help="root holding one sub-directory per class")
    src.add_argument("--from-manifest", help="re-split the entries of an existing manifest")
    s.add_argument("--out", required=True, help="manifest JSON to write")
    s.add_argument("--ratios", default="0.8,0.1,0.1")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_split)

    t = sub.add_parser("train", help="train a model from a run config")
    t.add_argument("--config", required=True)
    t.add_argument("--manifest")
    t.add_argument("--out-dir")
    t.add_argument("--data-dir", help="dataset root (defaults to the config or manifest)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.add_argument("--report", required=True, help="output directory for report files")
    e.add_argument("--data-dir")
    e.add_argument("--batch-size", type=int, default=32)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("predict", help="classify one image")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--image", required=True)
    r.set_defaults(func=cmd_predict)

    i = sub.add_parser("info", help="parameter summary of an architecture")
    i.add_argument("--arch", required=True, choices=("vgg16", "resnet50", "vit"))
    i.add_argument("--classes", type=int, default=3)
    i.set_defaults(func=cmd_info)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except CLIError as exc:
        print(f"cocoanet {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
