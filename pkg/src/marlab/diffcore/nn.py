"""Layers built on the tensor tape: linear, embedding, layer norm, MLP, attention."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

HIDDEN = 64


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Container that discovers parameters and submodules through its attributes."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ShapeError(f"{name}: stored shape {value.shape} != {p.shape}")
            p.data = value.copy()

    def copy_from(self, other: "Module") -> None:
        self.load_state_dict(other.state_dict())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def param(data: np.ndarray, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        self.n_in, self.n_out = n_in, n_out
        self.weight = param(uniform_init(rng, n_in, (n_in, n_out)))
        self.bias = param(np.zeros(n_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"Linear({self.n_in}->{self.n_out}): input has shape {x.shape}")
        if x.ndim == 1:
            return T.reshape(self.forward(T.reshape(x, (1, self.n_in))), (self.n_out,))
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class Embedding(Module):
    """Table lookup; accepts integer indices or dense one-hot/feature rows."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.n_in, self.n_out = n_in, n_out
        self.weight = param(uniform_init(rng, n_in, (n_in, n_out)))

    def forward(self, x) -> Tensor:
        if isinstance(x, Tensor) or np.asarray(x).dtype.kind == "f":
            x = T.as_tensor(x)
            if x.shape[-1] != self.n_in:
                raise ShapeError(f"Embedding({self.n_in}): feature input shape {x.shape}")
            return T.matmul(x, self.weight)
        idx = np.asarray(x, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_in):
            raise IndexError(f"Embedding({self.n_in}): index out of range")
        return T.getitem(self.weight, idx)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.dim, self.eps = dim, eps
        self.gain = param(np.ones(dim))
        self.bias = param(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.dim:
            raise ShapeError(f"LayerNorm({self.dim}): input has shape {x.shape}")
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class MLP(Module):
    """Hidden layers of ``Linear -> ReLU -> LayerNorm`` followed by a linear head."""

    def __init__(
        self,
        n_in: int,
        n_out: int,
        rng: np.random.Generator,
        hidden: int = HIDDEN,
        n_hidden: int = 2,
        layer_norm: bool = True,
    ):
        dims = [n_in] + [hidden] * n_hidden
        self.layers = [Linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]
        self.norms = [LayerNorm(hidden) for _ in range(n_hidden)] if layer_norm else []
        self.head = Linear(dims[-1], n_out, rng)

    def features(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = T.relu(layer(x))
            if self.norms:
                x = self.norms[i](x)
        return x

    def forward(self, x) -> Tensor:
        return self.head(self.features(T.as_tensor(x)))


class FeedForward(Module):
    def __init__(self, dim: int, rng: np.random.Generator, hidden: int = HIDDEN):
        self.inner = Linear(dim, hidden, rng)
        self.outer = Linear(hidden, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.outer(T.relu(self.inner(x)))


class MultiHeadSelfAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise ValueError(f"hidden dim {dim} not divisible by {heads} heads")
        self.dim, self.heads = dim, heads
        self.query = Linear(dim, dim, rng)
        self.key = Linear(dim, dim, rng)
        self.value = Linear(dim, dim, rng)
        self.out = Linear(dim, dim, rng)

    def _split(self, x: Tensor) -> Tensor:
        b, s, _ = x.shape
        return T.transpose(T.reshape(x, (b, s, self.heads, self.dim // self.heads)), (0, 2, 1, 3))

    def attention_weights(self, x: Tensor, mask=None) -> Tensor:
        q, k = self._split(self.query(x)), self._split(self.key(x))
        scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(self.dim // self.heads))
        key_mask = None
        if mask is not None:
            key_mask = np.asarray(mask, dtype=bool)[:, None, None, :]
        return T.softmax(scores, axis=-1, mask=key_mask)

    def forward(self, x: Tensor, mask=None) -> Tensor:
        b, s, _ = x.shape
        weights = self.attention_weights(x, mask)
        mixed = T.matmul(weights, self._split(self.value(x)))
        merged = T.reshape(T.transpose(mixed, (0, 2, 1, 3)), (b, s, self.dim))
        return self.out(merged)


class AttentionBlock(Module):
    """Self-attention then feed-forward, each with a residual and post layer norm."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, hidden: int = HIDDEN):
        self.attn = MultiHeadSelfAttention(dim, heads, rng)
        self.norm1 = LayerNorm(dim)
        self.ff = FeedForward(dim, rng, hidden)
        self.norm2 = LayerNorm(dim)

    def forward(self, slots: Tensor, mask=None) -> Tensor:
        if slots.ndim != 3:
            raise ShapeError(f"AttentionBlock expects [batch, slots, dim], got {slots.shape}")
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != slots.shape[:2]:
                raise ShapeError(f"mask shape {mask.shape} != slot shape {slots.shape[:2]}")
            if not mask.any(axis=-1).all():
                raise ValueError("every key slot is masked for at least one query")
        x = self.norm1(slots + self.attn(slots, mask))
        return self.norm2(x + self.ff(x))
