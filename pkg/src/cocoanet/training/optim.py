from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Elements per in-place update slice; bounds temporaries for the 100M-entry VGG FC1 weight.
_CHUNK = 1 << 22


class NonFiniteGradientError(FloatingPointError):
    """A gradient contained NaN or Inf; the step was not applied."""


@dataclass
class OptimizerState:
    """Adam first/second moments per parameter name and the step counter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: OptimizerState, lr: float,
              betas=(0.9, 0.999), weight_decay: float = 0.0, eps: float = 1e-8) -> None:
    """One Adam update, in place on ``params`` and ``state``.

    Weight decay is the L2 form ``g <- g + weight_decay * w`` applied before
    the moment updates; bias correction uses the incremented step count.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    b1, b2 = (float(b) for b in betas)
    bad = [n for n, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise NonFiniteGradientError(f"non-finite gradients in {bad[:5]}"
                                     + (f" (+{len(bad) - 5} more)" if len(bad) > 5 else ""))
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    step = lr / c1
    sqrt_c2 = math.sqrt(c2)
    wd = float(weight_decay)
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {w.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(w)
            state.v[name] = np.zeros_like(w)
        wf, gf = w.reshape(-1), g.reshape(-1)
        mf, vf = state.m[name].reshape(-1), state.v[name].reshape(-1)
        for s in range(0, wf.size, _CHUNK):
            sl = slice(s, s + _CHUNK)
            gs = gf[sl] + wd * wf[sl] if wd else gf[sl]
            mf[sl] *= b1
            mf[sl] += (1.0 - b1) * gs
            vf[sl] *= b2
            vf[sl] += (1.0 - b2) * (gs * gs)
            denom = np.sqrt(vf[sl])
            denom /= sqrt_c2
            denom += eps
            wf[sl] -= step * mf[sl] / denom


class Adam:
    """Adam over a model's named parameters; reads ``Parameter.grad``."""

    def __init__(self, named_params, lr: float = 1e-3, betas=(0.9, 0.999),
                 weight_decay: float = 0.0, eps: float = 1e-8):
        self.named = list(named_params)
        self.lr, self.betas, self.weight_decay, self.eps = lr, tuple(betas), weight_decay, eps
        self.state = OptimizerState()

    def step(self, lr: float | None = None) -> None:
        params = {n: p.data for n, p in self.named}
        grads = {n: (p.grad if p.grad is not None else np.zeros_like(p.data)) for n, p in self.named}
        adam_step(params, grads, self.state, self.lr if lr is None else lr, self.betas,
                  self.weight_decay, self.eps)
