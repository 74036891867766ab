"""Differentiable layer core (numpy, explicit backward passes)."""
from . import functional
from .attention import (ClassTokenSelect, MultiHeadSelfAttention, PatchEmbedding, TokenEmbedding,
                        TransformerBlock)
from .gradcheck import check_module, numerical_gradient, relative_error
from .layers import (GELU, BatchNorm2d, Conv2d, Dense, Dropout, Flatten, GlobalAvgPool2d, LayerNorm,
                     MaxPool2d, Module, Parameter, ReLU, Sequential, Softmax, Tanh)
from .tensor import as_tensor, get_dtype, precision, set_dtype

__all__ = [
    "functional", "check_module", "numerical_gradient", "relative_error",
    "Module", "Parameter", "Sequential", "Conv2d", "MaxPool2d", "ReLU", "GELU", "Tanh",
    "BatchNorm2d", "Dense", "LayerNorm", "Softmax", "Dropout", "Flatten", "GlobalAvgPool2d",
    "MultiHeadSelfAttention", "TransformerBlock", "PatchEmbedding", "TokenEmbedding",
    "ClassTokenSelect", "as_tensor", "get_dtype", "set_dtype", "precision",
]
