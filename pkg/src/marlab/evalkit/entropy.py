"""Trajectory entropy and joint-action histograms."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..envs.matrix import MatrixGameSpec
from ..pg.matrix_policies import MatrixPolicy
from ..pg.orders import sample_orders

EXACT_LIMIT = 10**6
MIN_MC_SAMPLES = 10**4


@dataclass(frozen=True)
class EntropyEstimate:
    value: float  # nats
    method: str  # "exact_enumeration" or "monte_carlo"
    samples: int = 0
    stderr: float = 0.0

    def __post_init__(self):
        if self.method not in ("exact_enumeration", "monte_carlo"):
            raise ValueError(f"unknown entropy method {self.method!r}")


def entropy_of(probs: np.ndarray) -> float:
    """Shannon entropy in nats of a probability array of any shape."""
    p = np.asarray(probs, dtype=np.float64).ravel()
    p = p[p > 0]
    return float(max(0.0, -(p * np.log(p)).sum()))


def _sample_joint(policy: MatrixPolicy, n: int, rng) -> np.ndarray:
    orders = sample_orders(n, policy.n_agents, rng) if policy.needs_order else None
    return policy.sample(n, rng, orders)


def trajectory_entropy(policy: MatrixPolicy, game: MatrixGameSpec | None = None, method: str = "exact",
                       samples: int = MIN_MC_SAMPLES, rng=None) -> EntropyEstimate:
    """Entropy of the joint action a policy takes in a stateless game.

    Auto-regressive policies use the mixture over uniformly random execution
    orders. ``method="mc"`` estimates ``-E[log p(a)]`` from samples and reports
    the standard error.
    """
    probs = policy.joint_probs()
    if method == "exact":
        if probs.size > EXACT_LIMIT:
            raise ValueError(f"{probs.size} joint outcomes is too many to enumerate")
        return EntropyEstimate(entropy_of(probs), "exact_enumeration")
    if method != "mc":
        raise ValueError(f"unknown method {method!r}; use 'exact' or 'mc'")
    if samples < MIN_MC_SAMPLES:
        raise ValueError(f"Monte Carlo entropy needs at least {MIN_MC_SAMPLES} samples")
    rng = rng if rng is not None else np.random.default_rng(0)
    joint = _sample_joint(policy, samples, rng)
    logp = np.log(probs[tuple(joint.T)])
    return EntropyEstimate(float(-logp.mean()), "monte_carlo", samples, float(logp.std(ddof=1) / np.sqrt(samples)))


@dataclass
class JointActionHistogram:
    counts: np.ndarray  # shape (A,) * n
    episodes: int
    normalized: bool = False

    def __post_init__(self):
        total = self.counts.sum()
        expect = 1.0 if self.normalized else self.episodes
        if not np.isclose(total, expect, rtol=0, atol=1e-12 * max(1, expect)):
            raise ValueError(f"histogram total {total} != {expect}")

    def normalize(self) -> "JointActionHistogram":
        return JointActionHistogram(self.counts / self.episodes, self.episodes, normalized=True)

    def occupied(self, among=None) -> int:
        """Cells with at least one hit, optionally only where the boolean mask ``among`` is set."""
        hit = self.counts > 0
        return int((hit & among).sum() if among is not None else hit.sum())

    def dominant_cells(self, share: float = 0.5) -> int:
        """Number of cells holding more than ``share`` of the total."""
        return int((self.counts > share * self.counts.sum()).sum())

    def layout_2d(self) -> np.ndarray:
        """First half of the agents indexes rows, second half columns (``16 x 16`` for four agents with 4 actions)."""
        n = self.counts.ndim
        a = self.counts.shape[0]
        half = n // 2
        return self.counts.reshape(a**half, a ** (n - half))


def joint_action_histogram(policy: MatrixPolicy, game: MatrixGameSpec | None = None, episodes: int = 1000,
                           rng=None) -> JointActionHistogram:
    rng = rng if rng is not None else np.random.default_rng(0)
    joint = _sample_joint(policy, episodes, rng)
    counts = np.zeros((policy.n_actions,) * policy.n_agents)
    np.add.at(counts, tuple(joint.T), 1.0)
    return JointActionHistogram(counts, episodes)


def write_histogram_csv(hist: JointActionHistogram, path) -> Path:
    """Columns ``a1..an, count`` with 1-based actions."""
    path = Path(path)
    n = hist.counts.ndim
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"a{i + 1}" for i in range(n)] + ["count"])
        for idx in itertools.product(*[range(d) for d in hist.counts.shape]):
            w.writerow([i + 1 for i in idx] + [repr(float(hist.counts[idx]))])
    return path


def read_histogram_csv(path) -> JointActionHistogram:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = len(header) - 1
    joints = np.array([[int(v) - 1 for v in r[:n]] for r in body])
    counts = np.zeros(tuple(joints.max(axis=0) + 1))
    counts[tuple(joints.T)] = [float(r[n]) for r in body]
    return JointActionHistogram(counts, int(round(counts.sum())))


def write_heatmap_csv(hist: JointActionHistogram, path) -> Path:
    """2-D layout: rows are joint actions of the first agents, columns of the rest, labels 1-based."""
    path = Path(path)
    grid = hist.layout_2d()
    n = hist.counts.ndim
    a = hist.counts.shape[0]
    half = n // 2
    rows = ["".join(str(v + 1) for v in t) for t in itertools.product(range(a), repeat=half)]
    cols = ["".join(str(v + 1) for v in t) for t in itertools.product(range(a), repeat=n - half)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row"] + cols)
        for label, line in zip(rows, grid):
            w.writerow([label] + [repr(float(v)) for v in line])
    return path


def bridge_trajectory_entropy(actor, spec, episodes: int = MIN_MC_SAMPLES, rng=None,
                              randomize_order: bool = True) -> EntropyEstimate:
    """Monte Carlo trajectory entropy on Bridge from the summed log-probs of sampled joint actions.

    Auto-regressive log-probs are those of the sampled order, so the estimate
    is of the actions given the orders.
    """
    from ..envs.bridge import VecBridge
    from ..pg.ppo import act

    rng = rng if rng is not None else np.random.default_rng(0)
    env = VecBridge(spec, episodes)
    logp = np.zeros(episodes)
    live = np.ones(episodes, dtype=bool)
    for _ in range(spec.horizon):
        alive = 1.0 - env.done
        actions, lp, _, _ = act(actor, env.observations(), alive, spec, rng, randomize_order)
        logp += np.where(live, (lp * alive).sum(axis=1), 0.0)
        _, _, ended = env.step(actions)
        live &= ~ended
        if not live.any():
            break
    return EntropyEstimate(float(-logp.mean()), "monte_carlo", episodes, float(logp.std(ddof=1) / np.sqrt(episodes)))
