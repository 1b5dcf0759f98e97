"""SGD and Adam over tape parameters, with optional global-norm clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import NonFiniteError, Tensor


def global_norm(grads: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads)))


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    """Rescale ``grads`` so their joint L2 norm is at most ``max_norm``.

    Returns the (possibly rescaled) gradients and the pre-clip norm.
    """
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = [g * scale for g in grads]
    return grads, norm


@dataclass
class Optimizer:
    params: list[Tensor]
    learning_rate: float
    kind: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_norm_clip: float | None = None
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    last_grad_norm: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.kind == "adam" and not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        sq = [float(np.vdot(g, g)) for g in grads]
        norm = float(np.sqrt(sum(sq)))
        if not np.isfinite(norm):
            bad = next(p for p, s in zip(self.params, sq) if not np.isfinite(s))
            raise NonFiniteError(f"non-finite gradient for parameter {bad.name or bad.shape}")
        self.last_grad_norm = norm
        scale = 1.0
        if self.grad_norm_clip is not None and norm > self.grad_norm_clip:
            scale = self.grad_norm_clip / (norm + 1e-12)
        self.step_count += 1
        lr = self.learning_rate
        if self.kind == "sgd":
            for p, g in zip(self.params, grads):
                p.data -= (lr * scale) * g
            return
        b1, b2 = self.beta1, self.beta2
        step_size = lr / (1.0 - b1**self.step_count)
        c2 = 1.0 - b2**self.step_count
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if scale != 1.0:
                g = g * scale
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= step_size * m / (np.sqrt(v / c2) + self.eps)


def sgd(params, learning_rate: float, grad_norm_clip: float | None = None) -> Optimizer:
    return Optimizer(list(params), learning_rate, kind="sgd", grad_norm_clip=grad_norm_clip)


def adam(params, learning_rate: float, grad_norm_clip: float | None = None) -> Optimizer:
    return Optimizer(list(params), learning_rate, kind="adam", grad_norm_clip=grad_norm_clip)
