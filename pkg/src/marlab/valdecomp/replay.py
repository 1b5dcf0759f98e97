"""Uniform ring-buffer replay."""

from __future__ import annotations

import numpy as np


class ReplayBuffer:
    """FIFO buffer of named transition fields; storage is allocated on the first insert."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.size = 0
        self.cursor = 0
        self.fields: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return self.size

    def add(self, **batch) -> None:
        """Insert ``k`` transitions; every field has leading dimension ``k``."""
        arrays = {k: np.asarray(v) for k, v in batch.items()}
        k = {len(v) for v in arrays.values()}
        if len(k) != 1:
            raise ValueError("all fields need the same leading dimension")
        k = k.pop()
        if not self.fields:
            self.fields = {
                name: np.zeros((self.capacity,) + v.shape[1:], dtype=v.dtype) for name, v in arrays.items()
            }
        elif set(arrays) != set(self.fields):
            raise ValueError(f"fields {sorted(arrays)} != stored {sorted(self.fields)}")
        idx = (self.cursor + np.arange(k)) % self.capacity
        for name, v in arrays.items():
            self.fields[name][idx] = v
        self.cursor = int((self.cursor + k) % self.capacity)
        self.size = min(self.capacity, self.size + k)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return {name: v[idx] for name, v in self.fields.items()}
