"""Synthetic solid-colour-plus-noise datasets for smoke tests and demos."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from . import CLASS_NAMES
from .data.dataset import ArrayDataset
from .data.transforms import resize_bilinear

# One base colour per class (Anthracnose, CSSVD, Healthy).
BASE_COLORS = np.array([[0.75, 0.35, 0.20], [0.55, 0.60, 0.15], [0.20, 0.55, 0.30]], dtype=np.float32)


def color_images(n_per_class: int, size: int = 64, noise: float = 0.08, seed: int = 0):
    """float32 images (N, size, size, 3) in [0, 1] and int labels, classes interleaved."""
    rng = np.random.default_rng(seed)
    n = n_per_class * len(BASE_COLORS)
    labels = np.arange(n) % len(BASE_COLORS)
    imgs = BASE_COLORS[labels][:, None, None, :] + rng.normal(0.0, noise, (n, size, size, 3))
    return np.clip(imgs, 0.0, 1.0).astype(np.float32), labels


def color_dataset(n_per_class: int = 20, size: int = 64, out_size: int = 224, noise: float = 0.08,
                  seed: int = 0) -> ArrayDataset:
    """Mean-subtracted N x 3 x out_size x out_size tensors (bilinear upscaling)."""
    imgs, labels = color_images(n_per_class, size, noise, seed)
    up = np.stack([resize_bilinear(im, out_size, out_size) for im in imgs])
    up -= up.reshape(-1, 3).mean(axis=0)
    return ArrayDataset(np.ascontiguousarray(up.transpose(0, 3, 1, 2), dtype=np.float32), labels)


def write_image_tree(root, n_per_class: int = 4, size: int = 64, noise: float = 0.08,
                     seed: int = 0, class_names=CLASS_NAMES) -> Path:
    """Write ``<root>/<Class>/img_XXX.png`` files for CLI fixtures."""
    root = Path(root)
    imgs, labels = color_images(n_per_class, size, noise, seed)
    for i, (im, lab) in enumerate(zip(imgs, labels)):
        d = root / class_names[lab]
        d.mkdir(parents=True, exist_ok=True)
        Image.fromarray((im * 255).round().astype(np.uint8)).save(d / f"img_{i:03d}.png")
    return root
