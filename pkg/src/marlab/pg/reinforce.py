"""REINFORCE with a batch-mean baseline for stateless matrix games."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import Tensor, adam, backprop, ops
from ..envs.matrix import MatrixGameSpec
from .matrix_policies import MatrixPolicy
from .orders import multistep_weights, sample_orders


@dataclass
class ReinforceConfig:
    updates: int = 2000
    learning_rate: float = 0.05
    batch_size: int = 128
    entropy_coef: float = 0.01
    multi_step: bool = True
    randomize_order: bool = True


@dataclass
class ReinforceStats:
    mean_reward: float
    loss: float


def reinforce_loss(policy: MatrixPolicy, joint, rewards, orders, entropy_coef: float, multi_step: bool = True) -> Tensor:
    """``-mean[(R - mean R) * sum_i w_i log pi_i] - c * mean[sum_i H_i]``.

    ``w_i`` is the multi-step weight for auto-regressive policies and 1 otherwise.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    adv = rewards - rewards.mean()
    logp, ent = policy.log_probs(joint, orders)
    if policy.needs_order:
        weights = multistep_weights(orders, multi_step)
    else:
        weights = np.ones(logp.shape)
    surrogate = ops.mean(ops.tsum(logp * Tensor(weights * adv[:, None]), axis=1))
    return -surrogate - entropy_coef * ops.mean(ops.tsum(ent, axis=1))


def reinforce_update(policy, opt, game: MatrixGameSpec, cfg: ReinforceConfig, rng) -> ReinforceStats:
    orders = None
    if policy.needs_order:
        b, n = cfg.batch_size, policy.n_agents
        orders = sample_orders(b, n, rng) if cfg.randomize_order else np.tile(np.arange(n), (b, 1))
    joint = policy.sample(cfg.batch_size, rng, orders)
    rewards, _ = game.step(joint)
    opt.zero_grad()
    loss = reinforce_loss(policy, joint, rewards, orders, cfg.entropy_coef, cfg.multi_step)
    backprop(loss)
    opt.step()
    return ReinforceStats(float(rewards.mean()), float(loss.data))


def expected_return(policy: MatrixPolicy, game: MatrixGameSpec) -> float:
    return float((policy.joint_probs() * game.payoff.array).sum())


def train_matrix_pg(policy: MatrixPolicy, game: MatrixGameSpec, cfg: ReinforceConfig, rng, callback=None):
    """Run ``cfg.updates`` REINFORCE steps; ``callback(step, policy, stats)`` after each one."""
    opt = adam(policy.parameters(), cfg.learning_rate)
    for step in range(1, cfg.updates + 1):
        stats = reinforce_update(policy, opt, game, cfg, rng)
        if callback is not None:
            callback(step, policy, stats)
    return policy
