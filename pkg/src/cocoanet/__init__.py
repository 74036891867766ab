"""Cacao leaf disease classification toolkit (VGG16, ResNet50, ViT)."""

__version__ = "0.1.0"

CLASS_NAMES = ("Anthracnose", "CSSVD", "Healthy")
