"""Reverse-mode autodiff over dense float64 arrays, plus the layers and optimizers the learners use."""

from . import tensor as ops
from .gradcheck import max_relative_error, numerical_grad
from .nn import (
    HIDDEN,
    MLP,
    AttentionBlock,
    Embedding,
    FeedForward,
    LayerNorm,
    Linear,
    Module,
    MultiHeadSelfAttention,
)
from .optim import Optimizer, adam, clip_by_global_norm, global_norm, sgd
from .tensor import NonFiniteError, ShapeError, Tensor, backprop, no_grad

__all__ = [
    "HIDDEN",
    "MLP",
    "AttentionBlock",
    "Embedding",
    "FeedForward",
    "LayerNorm",
    "Linear",
    "Module",
    "MultiHeadSelfAttention",
    "NonFiniteError",
    "Optimizer",
    "ShapeError",
    "Tensor",
    "adam",
    "backprop",
    "clip_by_global_norm",
    "global_norm",
    "max_relative_error",
    "no_grad",
    "numerical_grad",
    "ops",
    "sgd",
]
