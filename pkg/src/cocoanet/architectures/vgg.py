from __future__ import annotations

import numpy as np

from ..nn import Conv2d, Dense, Dropout, Flatten, MaxPool2d, ReLU, Sequential
from .spec import ArchitectureSpec

# Output channels per conv group; a 2x2/2 max-pool closes every group.
VGG16_GROUPS = ((64, 64), (128, 128), (256, 256, 256), (512, 512, 512), (512, 512, 512))


class VGG16(Sequential):
    """13 conv (3x3, pad 1) + 5 max-pool feature stack, then FC 4096-4096-classes."""

    def __init__(self, spec: ArchitectureSpec, rng: np.random.Generator):
        layers = []
        in_ch = 3
        for g, group in enumerate(VGG16_GROUPS, start=1):
            for i, out_ch in enumerate(group, start=1):
                layers.append((f"conv{g}_{i}", Conv2d(in_ch, out_ch, 3, 1, 1, rng=rng)))
                layers.append((f"relu{g}_{i}", ReLU()))
                in_ch = out_ch
            layers.append((f"pool{g}", MaxPool2d(2, 2)))
        features = Sequential.named(layers)

        side = spec.image_size // 32
        drop = spec.ff_dropout
        classifier = Sequential.named([
            ("flatten", Flatten()),
            ("fc1", Dense(512 * side * side, 4096, rng=rng)),
            ("relu1", ReLU()),
            ("drop1", Dropout(drop)),
            ("fc2", Dense(4096, 4096, rng=rng)),
            ("relu2", ReLU()),
            ("drop2", Dropout(drop)),
            ("fc3", Dense(4096, spec.num_classes, rng=rng)),
        ])
        super().__init__()
        self.features = features
        self.classifier = classifier
