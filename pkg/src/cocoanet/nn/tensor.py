"""Dtype policy for the layer core.

Tensors are plain ``numpy.ndarray`` objects in NCHW (images) or ``(..., D)``
(token sequences) layout. Production code runs in float32; gradient checks
switch the whole core to float64 with :func:`precision`.
"""
from __future__ import annotations

import contextlib
from typing import Iterator

import numpy as np

_DTYPE = np.dtype(np.float32)


def get_dtype() -> np.dtype:
    return _DTYPE


def set_dtype(dtype) -> None:
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _DTYPE = dtype


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily change the default dtype (``"float64"`` for gradient checks)."""
    previous = _DTYPE
    set_dtype(dtype)
    try:
        yield
    finally:
        set_dtype(previous)


def as_tensor(x) -> np.ndarray:
    """Convert ``x`` to a C-contiguous array in the current default dtype."""
    return np.ascontiguousarray(x, dtype=_DTYPE)


def check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")
