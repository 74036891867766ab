"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .layers import Module


def numerical_gradient(f: Callable[[], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d f / d x by central differences; ``x`` is perturbed in place and restored."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        g[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> float:
    """max |a - n| / max(|a| + |n|, floor) over elements.

    The floor keeps gradients that are exactly zero (e.g. the attention key
    bias) from turning finite-difference round-off into a large ratio.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(a) + np.abs(n), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def check_module(module: Module, x: np.ndarray, seed: int = 0, h: float = 1e-5,
                 wrt_input: bool = True) -> dict[str, float]:
    """Compare analytic and numerical gradients of a random projection of the output.

    The scalar objective is ``sum(module(x) * r)`` for a fixed random ``r``.
    Dropout generators are reseeded before every forward pass so the mask is
    the same across perturbations. Returns ``{name: max relative error}``
    for the input (``"input"``) and every parameter. Run under
    ``precision("float64")``.
    """
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)

    def forward():
        module.set_rng(np.random.default_rng(seed + 1))
        return module.forward(x)

    out = forward()
    r = rng.standard_normal(out.shape)

    def objective() -> float:
        return float(np.sum(forward() * r))

    module.zero_grad()
    forward()
    dx = module.backward(r.astype(out.dtype))
    errors = {}
    if wrt_input:
        errors["input"] = relative_error(dx, numerical_gradient(objective, x, h))
    for name, p in module.named_parameters():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        errors[name] = relative_error(analytic, numerical_gradient(objective, p.data, h))
    module.clear_cache()
    return errors
