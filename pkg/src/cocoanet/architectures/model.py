from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..nn import Module, functional as F
from ..nn.tensor import as_tensor
from .resnet import ResNet50
from .spec import ArchitectureSpec
from .vgg import VGG16
from .vit import VisionTransformer

_BUILDERS = {"vgg16": VGG16, "resnet50": ResNet50, "vit": VisionTransformer}


class ModelInstance:
    """A built network plus its spec, mode and dropout generator.

    ``network`` maps images to logits; :meth:`forward` adds the softmax.
    """

    def __init__(self, spec: ArchitectureSpec, network: Module, seed: int = 0):
        self.spec = spec
        self.network = network
        self.seed = seed
        self.network.set_rng(np.random.default_rng([seed, 1]))

    @property
    def mode(self) -> str:
        return "train" if self.network.training else "eval"

    def train(self) -> "ModelInstance":
        self.network.train()
        return self

    def eval(self) -> "ModelInstance":
        self.network.eval()
        return self

    def reseed_dropout(self, seed) -> None:
        self.network.set_rng(np.random.default_rng(seed))

    def forward_logits(self, x: np.ndarray) -> np.ndarray:
        return self.network.forward(x)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return F.softmax(self.network.forward(x))

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        return self.network.backward(dlogits)

    def parameters(self):
        return self.network.parameters()

    def named_parameters(self):
        return self.network.named_parameters()

    def zero_grad(self) -> None:
        self.network.zero_grad()

    def gradients(self):
        return self.network.gradients()

    def state_dict(self):
        return self.network.state_dict()

    def load_state_dict(self, state) -> None:
        self.network.load_state_dict(state)


def build(spec: ArchitectureSpec, seed: int = 0) -> ModelInstance:
    """Instantiate ``spec`` with weights drawn from a generator seeded by ``seed``."""
    rng = np.random.default_rng([seed, 0])
    return ModelInstance(spec, _BUILDERS[spec.family](spec, rng), seed)


def _build_family(family: str, spec: ArchitectureSpec | None, seed: int) -> ModelInstance:
    spec = spec if spec is not None else ArchitectureSpec(family)
    if spec.family != family:
        raise ValueError(f"expected a {family} spec, got {spec.family}")
    return build(spec, seed)


def build_vgg16(spec: ArchitectureSpec | None = None, seed: int = 0) -> ModelInstance:
    return _build_family("vgg16", spec, seed)


def build_resnet50(spec: ArchitectureSpec | None = None, seed: int = 0) -> ModelInstance:
    return _build_family("resnet50", spec, seed)


def build_vit(spec: ArchitectureSpec | None = None, seed: int = 0) -> ModelInstance:
    return _build_family("vit", spec, seed)


def forward_classify(model: ModelInstance, batch) -> np.ndarray:
    """Class probabilities, one row per image, columns in ``cocoanet.CLASS_NAMES`` order."""
    batch = as_tensor(batch)
    s = model.spec.image_size
    if batch.ndim != 4 or batch.shape[1:] != (3, s, s):
        raise ValueError(f"expected input of shape (N, 3, {s}, {s}), got {tuple(batch.shape)}")
    probs = model.forward(batch)
    model.network.clear_cache()
    return probs


def count_parameters(model) -> int:
    """Trainable scalars; batch-norm running statistics are not counted."""
    module = model.network if isinstance(model, ModelInstance) else model
    return int(sum(p.size for p in module.parameters()))


def parameter_breakdown(model: ModelInstance) -> "OrderedDict[str, int]":
    """Trainable parameter count per top-level stage of the network."""
    out = OrderedDict()
    for name, child in model.network.named_children():
        n = sum(p.size for p in child.parameters())
        if n:
            out[name] = int(n)
    return out

