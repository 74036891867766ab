"""Sample access for training and evaluation.

A dataset exposes ``len()``, ``labels`` (int array) and ``get(index, epoch)``
returning a preprocessed 3 x S x S float32 tensor. Per-sample randomness is a
function of ``(seed, epoch, index)`` only.
"""
from __future__ import annotations

from pathlib import Path
from typing import Callable

import numpy as np

from .manifest import DatasetManifest
from .transforms import (AugmentationPolicy, NormalizationStats, augment_train, load_rgb,
                         preprocess_eval)


class ArrayDataset:
    """In-memory images (N x 3 x S x S, already normalized) with integer labels."""

    def __init__(self, images: np.ndarray, labels):
        self.images = images
        self.labels = np.asarray(labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def get(self, index: int, epoch: int = 0) -> np.ndarray:
        return self.images[index]


class ManifestDataset:
    """Images of one manifest split, decoded from ``root`` on access."""

    def __init__(self, manifest: DatasetManifest, root, split: str, stats: NormalizationStats,
                 policy: AugmentationPolicy | None = None, seed: int = 0,
                 loader: Callable = load_rgb):
        self.entries = manifest.split(split)
        if not self.entries:
            raise ValueError(f"manifest has no {split!r} entries")
        self.root = Path(root)
        self.split = split
        self.stats = stats
        self.augment = policy is not None and policy.enabled.get(split, False)
        self.policy = policy
        self.seed = seed
        self.loader = loader
        self.labels = np.array([manifest.label_index(e) for e in self.entries], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, index: int, epoch: int = 0) -> np.ndarray:
        image = self.loader(self.root / self.entries[index].path)
        if self.augment:
            rng = np.random.default_rng([self.seed, epoch, index])
            return augment_train(image, self.policy, self.stats, rng)
        return preprocess_eval(image, self.stats)


def load_batch(dataset, indices, epoch: int = 0, dtype=np.float32):
    x = np.stack([dataset.get(int(i), epoch) for i in indices]).astype(dtype, copy=False)
    return x, dataset.labels[np.asarray(indices, dtype=np.int64)]


def batch_indices(n: int, batch_size: int, rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Split ``range(n)`` (shuffled when ``rng`` is given) into batches; the last may be partial."""
    order = rng.permutation(n) if rng is not None else np.arange(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]
