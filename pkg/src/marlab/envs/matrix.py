"""Stateless matrix games: the XOR game and the n-player permutation game.

Actions are 1-based in the user-facing helpers (``entry``, ``permutation_reward``,
CSV files) to match game notation, and 0-based in arrays.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class PayoffTensor:
    """Reward ``r(a1, ..., an)`` stored as an n-axis array indexed by 0-based actions."""

    array: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.array, dtype=np.float64)
        if arr.ndim < 1:
            raise ValueError("payoff tensor needs at least one axis")
        if not np.all(np.isfinite(arr)):
            raise ValueError("payoff entries must be finite")
        object.__setattr__(self, "array", arr)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def n_agents(self) -> int:
        return self.array.ndim

    def entry(self, *actions: int) -> float:
        """Payoff at a 1-based joint action."""
        if len(actions) != self.n_agents:
            raise ValueError(f"expected {self.n_agents} actions, got {len(actions)}")
        for a, n in zip(actions, self.dims):
            if not 1 <= a <= n:
                raise ValueError(f"action {a} outside 1..{n}")
        return float(self.array[tuple(a - 1 for a in actions)])

    def joint_actions(self) -> np.ndarray:
        """All 0-based joint actions in row-major order, shape ``[prod(dims), n_agents]``."""
        return np.array(list(itertools.product(*[range(n) for n in self.dims])), dtype=np.int64)

    def flat(self) -> np.ndarray:
        return self.array.reshape(-1)

    def rewards(self, joint: np.ndarray) -> np.ndarray:
        """Vectorized payoff lookup for 0-based joint actions ``[batch, n_agents]``."""
        joint = np.asarray(joint, dtype=np.int64)
        return self.array[tuple(joint.T)]


def xor_payoff() -> PayoffTensor:
    return PayoffTensor(np.array([[0.0, 1.0], [1.0, 0.0]]))


def permutation_reward(n: int, joint_action) -> int:
    """1 if the 1-based joint action is a permutation of ``1..n``, else 0."""
    joint_action = list(joint_action)
    if len(joint_action) != n:
        raise ValueError(f"expected {n} actions, got {len(joint_action)}")
    for a in joint_action:
        if not 1 <= int(a) <= n:
            raise ValueError(f"action {a} outside 1..{n}")
    return int(len(set(joint_action)) == n)


def permutation_payoff(n: int) -> PayoffTensor:
    arr = np.zeros((n,) * n)
    for perm in itertools.permutations(range(n)):
        arr[perm] = 1.0
    return PayoffTensor(arr)


def constant_payoff(value: float, n_agents: int = 2, n_actions: int = 2) -> PayoffTensor:
    return PayoffTensor(np.full((n_actions,) * n_agents, float(value)))


@dataclass(frozen=True)
class MatrixGameSpec:
    payoff: PayoffTensor
    name: str = "matrix"

    @property
    def n_agents(self) -> int:
        return self.payoff.n_agents

    @property
    def n_actions(self) -> int:
        return self.payoff.dims[0]

    horizon = 1

    def step(self, joint: np.ndarray) -> tuple[np.ndarray, bool]:
        """One-shot play: returns the rewards for each 0-based joint action row and ``done=True``."""
        return self.payoff.rewards(np.atleast_2d(joint)), True


def xor_game() -> MatrixGameSpec:
    return MatrixGameSpec(xor_payoff(), "xor")


def permutation_game(n: int) -> MatrixGameSpec:
    return MatrixGameSpec(permutation_payoff(n), f"perm{n}")


def write_payoff_csv(payoff: PayoffTensor, path) -> None:
    """Row-major CSV: a ``dims`` line, a column header, then one 1-based row per joint action."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dims", *payoff.dims])
        w.writerow([*(f"a{i + 1}" for i in range(payoff.n_agents)), "reward"])
        for joint, value in zip(payoff.joint_actions(), payoff.flat()):
            w.writerow([*(int(a) + 1 for a in joint), repr(float(value))])


def read_payoff_csv(path) -> PayoffTensor:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "dims":
        raise ValueError(f"{path}: first row must start with 'dims'")
    dims = tuple(int(x) for x in rows[0][1:])
    body = rows[2:]
    if len(body) != int(np.prod(dims)):
        raise ValueError(f"{path}: expected {int(np.prod(dims))} entries, found {len(body)}")
    arr = np.zeros(dims)
    expected = itertools.product(*[range(n) for n in dims])
    for lineno, (row, joint) in enumerate(zip(body, expected), start=3):
        got = tuple(int(x) - 1 for x in row[:-1])
        if got != joint:
            raise ValueError(f"{path}:{lineno}: entries must be row-major, got {row}")
        arr[joint] = float(row[-1])
    return PayoffTensor(arr)
