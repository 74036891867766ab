"""Run configuration files (JSON) with per-family hyperparameter defaults.

A bare ``{"model": {"family": "resnet50"}}`` expands to the full reference
ResNet50 recipe. Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .architectures import ArchitectureSpec
from .data.transforms import CROP, AugmentationPolicy
from .training.loop import TrainConfig

# Hyperparameter table per family; None means "not applicable".
FAMILY_DEFAULTS = {
    "vgg16": {"lr": 1e-2, "beta1": 0.0, "beta2": 0.999, "batch_size": 64,
              "dropout_attention": None, "dropout_feedforward": 0.5, "momentum": 0.9,
              "weight_decay": 0.0005, "epochs": 20},
    "resnet50": {"lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "batch_size": 64,
                 "dropout_attention": None, "dropout_feedforward": None, "momentum": 0.9,
                 "weight_decay": 0.0001, "epochs": 20},
    "vit": {"lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "batch_size": 64,
            "dropout_attention": 0.5, "dropout_feedforward": 0.2, "momentum": 0.9,
            "weight_decay": 0.03, "epochs": 20},
}

TRAIN_DEFAULTS = {"scheduler": "halve_per_epoch", "early_stop_patience": 5, "seed": 0}

AUGMENTATION_DEFAULTS = {
    "vgg16": {"scale_jitter_range": [256, 256], "crop": 224, "hflip_prob": 0.5,
              "color_aug": "none", "center_crop": False},
    "resnet50": {"scale_jitter_range": [256, 480], "crop": 224, "hflip_prob": 0.5,
                 "color_aug": "pca_lighting", "center_crop": False},
    "vit": {"scale_jitter_range": [256, 256], "crop": 224, "hflip_prob": 0.5,
            "color_aug": "none", "center_crop": False},
}

SECTIONS = ("model", "train", "data", "output")
DATA_KEYS = ("root", "manifest", "augmentation")
OUTPUT_KEYS = ("run_dir",)


class ConfigError(ValueError):
    pass


def _check_keys(section: str, given: dict, allowed) -> None:
    if not isinstance(given, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = set(given) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {sorted(unknown)}")


@dataclass
class RunConfig:
    arch: ArchitectureSpec
    train: TrainConfig
    augmentation: AugmentationPolicy
    data_root: str | None
    manifest: str | None
    run_dir: str | None
    resolved: dict

    def to_json(self) -> str:
        return json.dumps(self.resolved, indent=2, sort_keys=True) + "\n"


def resolve(doc: dict) -> RunConfig:
    """Validate ``doc`` and expand every default."""
    _check_keys("config", doc, SECTIONS)
    model = dict(doc.get("model") or {})
    if "family" not in model:
        raise ConfigError("model.family is required (vgg16, resnet50 or vit)")
    family = model["family"]
    if family not in FAMILY_DEFAULTS:
        raise ConfigError(f"unknown model family {family!r}")
    arch_keys = set(ArchitectureSpec.__dataclass_fields__) - {"extra", "attn_dropout", "ff_dropout"}
    _check_keys("model", model, arch_keys)

    train = dict(FAMILY_DEFAULTS[family])
    train.update(TRAIN_DEFAULTS)
    given_train = doc.get("train") or {}
    _check_keys("train", given_train, train)
    train.update(given_train)

    data = dict(doc.get("data") or {})
    _check_keys("data", data, DATA_KEYS)
    aug = copy.deepcopy(AUGMENTATION_DEFAULTS[family])
    given_aug = data.get("augmentation") or {}
    _check_keys("data.augmentation", given_aug, aug)
    aug.update(given_aug)
    output = dict(doc.get("output") or {})
    _check_keys("output", output, OUTPUT_KEYS)

    try:
        arch = ArchitectureSpec(**model, attn_dropout=train["dropout_attention"] or 0.0,
                                ff_dropout=train["dropout_feedforward"] or 0.0)
        tcfg = TrainConfig(arch, lr0=float(train["lr"]), betas=(train["beta1"], train["beta2"]),
                           weight_decay=float(train["weight_decay"]),
                           batch_size=int(train["batch_size"]), epochs=int(train["epochs"]),
                           schedule=train["scheduler"],
                           early_stop_patience=int(train["early_stop_patience"]),
                           seed=int(train["seed"]), momentum=train["momentum"])
        policy = AugmentationPolicy(tuple(aug["scale_jitter_range"]), int(aug["crop"]),
                                    float(aug["hflip_prob"]), aug["color_aug"], bool(aug["center_crop"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if not arch.image_size == policy.crop == CROP:
        raise ConfigError(f"model.image_size ({arch.image_size}) and data.augmentation.crop "
                          f"({policy.crop}) must both be {CROP}, the evaluation crop")

    resolved = {
        "model": {k: v for k, v in arch.to_dict().items() if k not in ("attn_dropout", "ff_dropout")},
        "train": train,
        "data": {"root": data.get("root"), "manifest": data.get("manifest"), "augmentation": aug},
        "output": {"run_dir": output.get("run_dir")},
    }
    return RunConfig(arch, tcfg, policy, data.get("root"), data.get("manifest"),
                     output.get("run_dir"), resolved)


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return resolve(doc)
