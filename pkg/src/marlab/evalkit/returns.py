"""Returns, payoff-fit error and per-state policy entropy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..envs.bridge import BridgeSpec, BridgeState, bridge_reset, bridge_step
from ..envs.matrix import MatrixGameSpec
from ..pg import ppo
from ..pg.matrix_policies import MatrixPolicy
from ..pg.orders import sample_orders
from ..valdecomp.fitting import payoff_fit_error

__all__ = [
    "ReturnSummary",
    "eval_return",
    "matrix_expected_return",
    "payoff_fit_error",
    "plan_return",
    "shared_policy_xor_return",
    "state_policy_entropy",
]


@dataclass(frozen=True)
class ReturnSummary:
    mean: float
    std: float
    episodes: int


def shared_policy_xor_return(alpha: float) -> float:
    """Expected XOR reward when both agents play action 1 with probability ``alpha``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return 2.0 * alpha * (1.0 - alpha)


def matrix_expected_return(policy: MatrixPolicy, game: MatrixGameSpec) -> float:
    return float((policy.joint_probs() * game.payoff.array).sum())


def eval_return(policy, env, episodes: int = 1, deterministic: bool | None = None, rng=None,
                randomize_order: bool = True) -> ReturnSummary:
    """Mean and std of undiscounted episode return.

    ``env`` is a ``MatrixGameSpec`` or a ``BridgeSpec``. Deterministic evaluation
    takes each agent's most likely action; it defaults to on except for
    auto-regressive policies.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    if isinstance(env, MatrixGameSpec):
        if deterministic is None:
            deterministic = not policy.needs_order
        if deterministic:
            probs = policy.joint_probs()
            if policy.needs_order:
                joint = np.array(np.unravel_index(probs.argmax(), probs.shape))[None]
            else:
                joint = _marginal_argmax(probs)[None]
            r = np.repeat(env.payoff.rewards(joint), episodes)
        else:
            orders = sample_orders(episodes, policy.n_agents, rng) if policy.needs_order else None
            r = env.payoff.rewards(policy.sample(episodes, rng, orders))
        return ReturnSummary(float(r.mean()), float(r.std()), episodes)
    returns = ppo.bridge_episode_returns(policy, env, episodes, rng, deterministic, randomize_order)
    return ReturnSummary(float(returns.mean()), float(returns.std()), episodes)


def _marginal_argmax(probs: np.ndarray) -> np.ndarray:
    n = probs.ndim
    return np.array([probs.sum(axis=tuple(j for j in range(n) if j != i)).argmax() for i in range(n)])


def plan_return(spec: BridgeSpec, plan) -> float:
    """Return of an open-loop joint plan given in each agent's own action frame."""
    state, _ = bridge_reset(spec)
    total = 0.0
    for joint in plan:
        res = bridge_step(spec, state, joint)
        total += res.team_reward
        state = res.state
        if res.done:
            break
    return total


def state_policy_entropy(actor, spec: BridgeSpec, state: BridgeState, randomize_order: bool = True) -> float:
    """Entropy in nats of the exact ``5 x 5`` joint action distribution at ``state``."""
    return ppo.state_policy_entropy(actor, spec, state, randomize_order)
