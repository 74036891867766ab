"""VGG16, ResNet50 and ViT classifiers built on :mod:`cocoanet.nn`."""
from .model import (ModelInstance, build, build_resnet50, build_vgg16, build_vit, count_parameters,
                    forward_classify, parameter_breakdown)
from .spec import FAMILIES, ArchitectureSpec

__all__ = [
    "ArchitectureSpec", "FAMILIES", "ModelInstance", "build", "build_vgg16", "build_resnet50",
    "build_vit", "forward_classify", "count_parameters", "parameter_breakdown",
]
