from __future__ import annotations

import numpy as np

from ..nn import (BatchNorm2d, Conv2d, Dense, GlobalAvgPool2d, MaxPool2d, Module, ReLU, Sequential)
from .spec import ArchitectureSpec

# (blocks, bottleneck width, output channels, first-block stride)
RESNET50_STAGES = ((3, 64, 256, 1), (4, 128, 512, 2), (6, 256, 1024, 2), (3, 512, 2048, 2))


class Bottleneck(Module):
    """1x1 reduce -> 3x3 (carries the stride) -> 1x1 expand, BN after each conv.

    The shortcut is the identity unless the shape changes, in which case a
    strided 1x1 projection + BN is used.
    """

    def __init__(self, in_ch: int, width: int, out_ch: int, stride: int, rng):
        super().__init__()
        self.branch = Sequential.named([
            ("conv1", Conv2d(in_ch, width, 1, bias=False, rng=rng)),
            ("bn1", BatchNorm2d(width)),
            ("relu1", ReLU()),
            ("conv2", Conv2d(width, width, 3, stride, 1, bias=False, rng=rng)),
            ("bn2", BatchNorm2d(width)),
            ("relu2", ReLU()),
            ("conv3", Conv2d(width, out_ch, 1, bias=False, rng=rng)),
            ("bn3", BatchNorm2d(out_ch)),
        ])
        if stride != 1 or in_ch != out_ch:
            self.shortcut = Sequential.named([
                ("conv", Conv2d(in_ch, out_ch, 1, stride, bias=False, rng=rng)),
                ("bn", BatchNorm2d(out_ch)),
            ])
        else:
            self.shortcut = None
        self.relu = ReLU()
        self.stride = stride

    def forward(self, x):
        identity = self.shortcut.forward(x) if self.shortcut is not None else x
        return self.relu.forward(self.branch.forward(x) + identity)

    def backward(self, dout):
        d = self.relu.backward(dout)
        dx = self.branch.backward(d)
        dx += self.shortcut.backward(d) if self.shortcut is not None else d
        return dx


class ResNet50(Sequential):
    def __init__(self, spec: ArchitectureSpec, rng: np.random.Generator):
        super().__init__()
        self.stem = Sequential.named([
            ("conv", Conv2d(3, 64, 7, 2, 3, bias=False, rng=rng)),
            ("bn", BatchNorm2d(64)),
            ("relu", ReLU()),
            ("pool", MaxPool2d(3, 2, 1)),
        ])
        in_ch = 64
        for s, (blocks, width, out_ch, stride) in enumerate(RESNET50_STAGES, start=1):
            stage = []
            for b in range(blocks):
                stage.append((str(b), Bottleneck(in_ch, width, out_ch, stride if b == 0 else 1, rng)))
                in_ch = out_ch
            setattr(self, f"layer{s}", Sequential.named(stage))
        self.pool = GlobalAvgPool2d()
        self.fc = Dense(in_ch, spec.num_classes, rng=rng)

    def stages(self) -> list[Sequential]:
        return [getattr(self, f"layer{s}") for s in range(1, 5)]
