"""Epsilon-greedy deep Q-learning with a value-decomposition mixer and a hard-updated target copy."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from ..diffcore import NonFiniteError, Tensor, adam, backprop, no_grad, ops
from ..envs.bridge import BridgeSpec, VecBridge
from ..envs.matrix import MatrixGameSpec
from .localq import LocalQTable, SharedQNet, joint_q_table, select
from .replay import ReplayBuffer


@dataclass
class QLearnConfig:
    steps: int = 10_000
    gamma: float = 0.99
    target_interval: int = 50
    learning_rate: float = 5e-4
    grad_norm_clip: float = 10.0
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    batch_size: int = 32
    buffer_capacity: int = 10_000
    record_every: int = 100
    n_envs: int = 8
    warmup: int = 32

    def __post_init__(self):
        if self.target_interval < 1:
            raise ValueError("target_interval must be >= 1")
        for name in ("eps_start", "eps_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def epsilon(self, step: int) -> float:
        """Linear decay from ``eps_start`` to ``eps_end`` over the first ``eps_decay_fraction`` of steps."""
        horizon = max(1, int(self.steps * self.eps_decay_fraction))
        frac = min(1.0, step / horizon)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


@dataclass
class QLearnResult:
    steps: np.ndarray
    metric: np.ndarray
    metric_name: str
    local: object
    mixer: object


class TargetCopy:
    """Frozen copy of (local, mixer) refreshed only by ``sync``."""

    def __init__(self, local, mixer):
        self.local = copy.deepcopy(local)
        self.mixer = copy.deepcopy(mixer)
        self.syncs = 0

    def sync(self, local, mixer) -> None:
        self.local.copy_from(local)
        self.mixer.copy_from(mixer)
        self.syncs += 1


def epsilon_greedy(q: np.ndarray, eps: float, rng: np.random.Generator) -> np.ndarray:
    """Per-agent epsilon-greedy over ``q [..., A]``; greedy ties go to the lowest index."""
    greedy = q.argmax(axis=-1)
    explore = rng.random(greedy.shape) < eps
    random = rng.integers(0, q.shape[-1], size=greedy.shape)
    return np.where(explore, random, greedy)


def _update(opt, local_out, mixer, joint, state, target) -> float:
    opt.zero_grad()
    pred = mixer(select(local_out, joint), Tensor(state), local_out, joint)
    resid = pred - Tensor(target)
    loss = ops.mean(resid * resid)
    if not np.isfinite(loss.data):
        raise NonFiniteError("non-finite TD loss")
    backprop(loss)
    opt.step()
    return float(loss.data)


def qlearn_matrix(mixer, local: LocalQTable, game: MatrixGameSpec, cfg: QLearnConfig, rng,
                  callback=None) -> QLearnResult:
    """Q-learning on a one-step game: the TD target is the immediate reward.

    Records the payoff-fit error of the full ``Q_tot`` table every ``record_every``
    steps and passes each ``(step, error)`` record to ``callback``.
    """
    payoff = game.payoff
    buf = ReplayBuffer(cfg.buffer_capacity)
    opt = adam(local.parameters() + mixer.parameters(), cfg.learning_rate, cfg.grad_norm_clip)
    target_net = TargetCopy(local, mixer)
    steps, errors = [], []
    for step in range(cfg.steps):
        joint = epsilon_greedy(local.table.data, cfg.epsilon(step), rng)[None]
        reward, _ = game.step(joint)
        buf.add(joint=joint, reward=reward)
        if len(buf) >= min(cfg.warmup, cfg.buffer_capacity):
            b = buf.sample(cfg.batch_size, rng)
            _update(opt, local(cfg.batch_size), mixer, b["joint"], np.ones((cfg.batch_size, mixer.state_dim)), b["reward"])
        if (step + 1) % cfg.target_interval == 0:
            target_net.sync(local, mixer)
        if (step + 1) % cfg.record_every == 0:
            q = joint_q_table(mixer, local.table.data)
            steps.append(step + 1)
            errors.append(float(((q - payoff.array) ** 2).sum()))
            if callback is not None:
                callback(step + 1, errors[-1])
    return QLearnResult(np.array(steps), np.array(errors), "fit_error", local, mixer)


def greedy_bridge_return(local: SharedQNet, spec: BridgeSpec) -> float:
    """Undiscounted return of one greedy episode (the environment is deterministic)."""
    env = VecBridge(spec, 1)
    total = 0.0
    for _ in range(spec.horizon):
        with no_grad():
            q = local(env.observations()).data
        team, _, ended = env.step(q.argmax(axis=-1))
        total += float(team[0])
        if ended[0]:
            break
    return total


def qlearn_bridge(mixer, local: SharedQNet, spec: BridgeSpec, cfg: QLearnConfig, rng,
                  callback=None) -> QLearnResult:
    """Q-learning on Bridge with one transition per environment per step.

    The end of an episode (both agents arrived or the horizon reached) is
    treated as terminal. Records the greedy evaluation return, also passed to
    ``callback(step, value)``.
    """
    env = VecBridge(spec, cfg.n_envs)
    buf = ReplayBuffer(cfg.buffer_capacity)
    opt = adam(local.parameters() + mixer.parameters(), cfg.learning_rate, cfg.grad_norm_clip)
    target_net = TargetCopy(local, mixer)
    obs, state = env.observations(), env.global_state()
    steps, returns = [], []
    for step in range(cfg.steps):
        with no_grad():
            q = local(obs).data
        joint = epsilon_greedy(q, cfg.epsilon(step), rng)
        team, _, ended = env.step(joint)
        next_obs, next_state = env.observations(), env.global_state()
        buf.add(obs=obs, state=state, joint=joint, reward=team, next_obs=next_obs,
                next_state=next_state, done=ended.astype(np.float64))
        obs, state = next_obs, next_state
        if len(buf) >= min(cfg.warmup, cfg.buffer_capacity):
            b = buf.sample(cfg.batch_size, rng)
            with no_grad():
                q_next = target_net.local(b["next_obs"])
                greedy = q_next.data.argmax(axis=-1)
                nxt = target_net.mixer(select(q_next, greedy), Tensor(b["next_state"]), q_next, greedy).data
            target = b["reward"] + cfg.gamma * (1.0 - b["done"]) * nxt
            _update(opt, local(b["obs"]), mixer, b["joint"], b["state"], target)
        if (step + 1) % cfg.target_interval == 0:
            target_net.sync(local, mixer)
        if (step + 1) % cfg.record_every == 0:
            steps.append(step + 1)
            returns.append(greedy_bridge_return(local, spec))
            if callback is not None:
                callback(step + 1, returns[-1])
    return QLearnResult(np.array(steps), np.array(returns), "eval_return", local, mixer)
