"""Image decoding, resizing, normalization and train-time augmentation.

Pixels are scaled to [0, 1] before the training-set mean is subtracted, so
``NormalizationStats.mean_rgb`` is in [0, 1] units. All resizes are bilinear
with half-pixel centres and no antialias filter.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from PIL import Image

EVAL_RESIZE = 256
CROP = 224


def load_rgb(path) -> np.ndarray:
    """Decode an image file to float32 H x W x 3 in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    except Exception as exc:
        raise OSError(f"cannot decode image {path}: {exc}") from exc
    return arr / np.float32(255.0)


def to_float_rgb(image) -> np.ndarray:
    """Accept a path, PIL image, uint8 array or float array; return float32 HxWx3 in [0, 1]."""
    if isinstance(image, (str, Path)):
        return load_rgb(image)
    if isinstance(image, Image.Image):
        return np.asarray(image.convert("RGB"), dtype=np.float32) / np.float32(255.0)
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.ndim != 3 or arr.shape[2] not in (3, 4):
        raise ValueError(f"expected an H x W x 3 image, got shape {arr.shape}")
    arr = arr[:, :, :3]
    if arr.dtype == np.uint8:
        return arr.astype(np.float32) / np.float32(255.0)
    return arr.astype(np.float32, copy=False)


def _axis_weights(n_in: int, n_out: int):
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w = (src - i0).astype(np.float32)
    return i0, i1, w


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Separable bilinear resize of an H x W x C float image."""
    h, w = img.shape[:2]
    if (h, w) == (height, width):
        return img.copy()
    y0, y1, wy = _axis_weights(h, height)
    rows = img[y0] * (1 - wy)[:, None, None] + img[y1] * wy[:, None, None]
    x0, x1, wx = _axis_weights(w, width)
    return rows[:, x0] * (1 - wx)[None, :, None] + rows[:, x1] * wx[None, :, None]


def shorter_side_size(h: int, w: int, size: int) -> tuple[int, int]:
    if h <= w:
        return size, int(w * size / h)
    return int(h * size / w), size


def resize_shorter(img: np.ndarray, size: int) -> np.ndarray:
    return resize_bilinear(img, *shorter_side_size(img.shape[0], img.shape[1], size))


def center_offsets(h: int, w: int, crop: int) -> tuple[int, int]:
    return (h - crop) // 2, (w - crop) // 2


@dataclass
class NormalizationStats:
    """Training-set channel means in [0, 1] units, plus the RGB covariance
    eigen-decomposition used by PCA lighting noise (optional)."""

    mean_rgb: np.ndarray
    eigval: np.ndarray | None = None
    eigvec: np.ndarray | None = None

    def __post_init__(self):
        self.mean_rgb = np.asarray(self.mean_rgb, dtype=np.float32).reshape(3)

    def to_dict(self) -> dict:
        d = {"mean_rgb": [float(v) for v in self.mean_rgb]}
        if self.eigval is not None:
            d["eigval"] = [float(v) for v in self.eigval]
            d["eigvec"] = np.asarray(self.eigvec).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        eigval = np.asarray(d["eigval"], dtype=np.float64) if d.get("eigval") else None
        eigvec = np.asarray(d["eigvec"], dtype=np.float64) if d.get("eigvec") else None
        return cls(np.asarray(d["mean_rgb"]), eigval, eigvec)


def compute_channel_means(paths: Iterable, loader: Callable = load_rgb,
                          resize: int = EVAL_RESIZE) -> NormalizationStats:
    """Per-channel mean (and RGB covariance) over all pixels after resize-to-``resize``.

    ``paths`` must be the training images only; ``loader`` is called once per
    path, which lets tests audit exactly which files were read.
    """
    total = np.zeros(3, dtype=np.float64)
    outer = np.zeros((3, 3), dtype=np.float64)
    count = 0
    for p in paths:
        img = resize_shorter(to_float_rgb(loader(p)), resize).reshape(-1, 3).astype(np.float64)
        total += img.sum(axis=0)
        outer += img.T @ img
        count += img.shape[0]
    if count == 0:
        raise ValueError("cannot compute channel means: the training split is empty")
    mean = total / count
    cov = outer / count - np.outer(mean, mean)
    eigval, eigvec = np.linalg.eigh(cov)
    return NormalizationStats(mean, np.clip(eigval, 0.0, None), eigvec)


def _finish(img: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    out = (img - stats.mean_rgb).transpose(2, 0, 1)
    return np.ascontiguousarray(out, dtype=np.float32)


def preprocess_eval(image, stats: NormalizationStats, crop: int = CROP, resize: int = EVAL_RESIZE) -> np.ndarray:
    """Resize shorter side to 256, centre-crop 224, subtract means; returns 3 x 224 x 224."""
    img = resize_shorter(to_float_rgb(image), resize)
    top, left = center_offsets(img.shape[0], img.shape[1], crop)
    return _finish(img[top:top + crop, left:left + crop], stats)


@dataclass
class AugmentationPolicy:
    scale_jitter_range: tuple[int, int] = (256, 256)
    crop: int = CROP
    hflip_prob: float = 0.5
    color_aug: str = "none"
    center_crop: bool = False
    enabled: dict = field(default_factory=lambda: {"train": True, "val": False, "test": False})

    def __post_init__(self):
        lo, hi = (int(v) for v in self.scale_jitter_range)
        self.scale_jitter_range = (lo, hi)
        if lo > hi:
            raise ValueError(f"scale_jitter_range {self.scale_jitter_range} is not ordered")
        if self.crop > lo:
            raise ValueError(f"crop {self.crop} exceeds the smallest rescale size {lo}")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ValueError(f"hflip_prob must be in [0, 1], got {self.hflip_prob}")
        if self.color_aug not in ("none", "pca_lighting"):
            raise ValueError(f"unknown color_aug {self.color_aug!r}")

    def to_dict(self) -> dict:
        return {"scale_jitter_range": list(self.scale_jitter_range), "crop": self.crop,
                "hflip_prob": self.hflip_prob, "color_aug": self.color_aug,
                "center_crop": self.center_crop, "enabled": dict(self.enabled)}


@dataclass
class AugmentationDraw:
    scale: int
    top: int
    left: int
    flip: bool
    alpha: np.ndarray | None


def sample_augmentation(policy: AugmentationPolicy, h: int, w: int,
                        rng: np.random.Generator) -> AugmentationDraw:
    """Draw the random parameters for one augmented view of an h x w image."""
    lo, hi = policy.scale_jitter_range
    scale = int(rng.integers(lo, hi + 1))
    rh, rw = shorter_side_size(h, w, scale)
    if policy.center_crop:
        top, left = center_offsets(rh, rw, policy.crop)
    else:
        top = int(rng.integers(0, rh - policy.crop + 1))
        left = int(rng.integers(0, rw - policy.crop + 1))
    flip = bool(rng.random() < policy.hflip_prob)
    alpha = rng.normal(0.0, 0.1, size=3) if policy.color_aug == "pca_lighting" else None
    return AugmentationDraw(scale, top, left, flip, alpha)


def augment_train(image, policy: AugmentationPolicy, stats: NormalizationStats,
                  rng: np.random.Generator) -> np.ndarray:
    """Scale jitter, random crop, horizontal flip, optional PCA lighting, mean subtraction."""
    img = to_float_rgb(image)
    draw = sample_augmentation(policy, img.shape[0], img.shape[1], rng)
    img = resize_shorter(img, draw.scale)
    c = policy.crop
    img = img[draw.top:draw.top + c, draw.left:draw.left + c]
    if draw.flip:
        img = img[:, ::-1]
    if draw.alpha is not None:
        if stats.eigval is None:
            raise ValueError("PCA lighting needs eigen statistics from compute_channel_means")
        shift = stats.eigvec @ (draw.alpha * stats.eigval)
        img = img + shift.astype(np.float32)
    return _finish(img, stats)
