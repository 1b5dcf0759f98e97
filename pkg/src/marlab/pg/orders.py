"""Execution orders for auto-regressive joint policies and the multi-step gradient weights."""

from __future__ import annotations

import numpy as np


def sample_execution_order(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random permutation of ``0..n-1``."""
    if n < 1:
        raise ValueError("need at least one agent")
    return rng.permutation(n)


def sample_orders(batch: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``[batch, n]`` independent uniform permutations."""
    return np.argsort(rng.random((batch, n)), axis=1)


def validate_order(order, n: int) -> np.ndarray:
    order = np.asarray(order, dtype=np.int64)
    if order.shape[-1] != n or not np.all(np.sort(order, axis=-1) == np.arange(n)):
        raise ValueError(f"{order.tolist()} is not a permutation of 0..{n - 1}")
    return order


def positions(orders: np.ndarray) -> np.ndarray:
    """0-based position of each agent in its order: ``positions[b, agent]``."""
    orders = np.asarray(orders, dtype=np.int64)
    pos = np.empty_like(orders)
    np.put_along_axis(pos, orders, np.arange(orders.shape[-1])[None].repeat(len(orders), 0), axis=-1)
    return pos


def multistep_weights(orders: np.ndarray, multi_step: bool = True) -> np.ndarray:
    """Per-agent gradient weights ``[batch, n]``.

    Summing the log-prob gradients over every prefix of the order counts the
    agent at 0-based position ``p`` exactly ``n - p`` times. Without
    multi-step optimization every agent has weight 1.
    """
    orders = np.asarray(orders, dtype=np.int64)
    n = orders.shape[-1]
    if not multi_step:
        return np.ones(orders.shape)
    return (n - positions(orders)).astype(np.float64)
