"""Central finite-difference checks against the tape."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, backprop


def numerical_grad(loss_fn: Callable[[], Tensor], p: Tensor, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(p.data)
    flat = p.data.reshape(-1)
    out = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = loss_fn().item()
        flat[i] = keep - h
        down = loss_fn().item()
        flat[i] = keep
        out[i] = (up - down) / (2 * h)
    return g


def max_relative_error(
    loss_fn: Callable[[], Tensor], params: list[Tensor], h: float = 1e-5
) -> float:
    """Relative error ``||a - n|| / (||a|| + ||n||)`` between tape and finite differences.

    Norms run over the concatenation of every parameter gradient, so a tensor
    whose true gradient is exactly zero does not blow up the ratio.
    """
    for p in params:
        p.grad = None
    backprop(loss_fn())
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    numeric = [numerical_grad(loss_fn, p, h) for p in params]
    diff = np.sqrt(sum(float(((a - n) ** 2).sum()) for a, n in zip(analytic, numeric)))
    scale = np.sqrt(sum(float((a**2).sum()) for a in analytic)) + np.sqrt(
        sum(float((n**2).sum()) for n in numeric)
    )
    return diff / max(scale, 1e-12)
