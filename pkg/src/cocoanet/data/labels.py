from __future__ import annotations

import numpy as np

from .. import CLASS_NAMES


def encode_label(name: str, class_names=CLASS_NAMES) -> np.ndarray:
    """One-hot vector for ``name`` at its position in ``class_names``."""
    try:
        idx = list(class_names).index(name)
    except ValueError:
        raise ValueError(f"unknown class {name!r}; expected one of {list(class_names)}") from None
    out = np.zeros(len(class_names), dtype=np.float32)
    out[idx] = 1.0
    return out


def decode_label(onehot, class_names=CLASS_NAMES) -> str:
    return class_names[int(np.argmax(onehot))]


def one_hot(labels, num_classes: int, dtype=np.float32) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes), dtype=dtype)
    out[np.arange(labels.size), labels] = 1
    return out
