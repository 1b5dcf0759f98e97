"""Joint-policy representations for stateless matrix games.

Actions are 0-based. ``log_probs(joint, orders)`` returns per-agent
log-probabilities ``[B, n]`` (agent-indexed, not order-indexed) together with
the per-agent entropies of the distributions those actions were drawn from.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..diffcore import Module, Tensor, no_grad, ops
from ..diffcore.nn import param
from .orders import sample_orders, validate_order

REPRESENTATIONS = ("shared", "individual", "id_conditioned", "auto_regressive")


def _logp_and_entropy(logits: Tensor, actions: np.ndarray) -> tuple[Tensor, Tensor]:
    logp = ops.log_softmax(logits, axis=-1)
    chosen = ops.reshape(ops.take_along(logp, actions[..., None], axis=-1), actions.shape)
    entropy = -ops.tsum(ops.exp(logp) * logp, axis=-1)
    return chosen, entropy


class MatrixPolicy(Module):
    representation = "base"
    needs_order = False

    def __init__(self, n_agents: int, n_actions: int):
        self.n_agents, self.n_actions = n_agents, n_actions

    def agent_logits(self) -> Tensor:
        """``[n, A]`` logits for the independent representations."""
        raise NotImplementedError

    def log_probs(self, joint, orders=None) -> tuple[Tensor, Tensor]:
        joint = np.asarray(joint, dtype=np.int64)
        b = joint.shape[0]
        logits = ops.getitem(ops.reshape(self.agent_logits(), (1, self.n_agents, self.n_actions)),
                             np.zeros(b, dtype=np.int64))
        return _logp_and_entropy(logits, joint)

    def sample(self, batch: int, rng: np.random.Generator, orders=None) -> np.ndarray:
        with no_grad():
            probs = np.exp(ops.log_softmax(self.agent_logits(), axis=-1).data)
        u = rng.random((batch, self.n_agents, 1))
        return (u > np.cumsum(probs, axis=-1)[None]).sum(axis=-1).clip(max=self.n_actions - 1)

    def joint_probs(self, order=None) -> np.ndarray:
        """Exact joint distribution, shape ``(A,) * n``."""
        with no_grad():
            probs = np.exp(ops.log_softmax(self.agent_logits(), axis=-1).data)
        out = probs[0]
        for p in probs[1:]:
            out = np.multiply.outer(out, p)
        return out


class SharedLogits(MatrixPolicy):
    """One logit vector used by every agent."""

    representation = "shared"

    def __init__(self, n_agents, n_actions, rng=None):
        super().__init__(n_agents, n_actions)
        self.logits = param(np.zeros(n_actions))

    def agent_logits(self):
        return ops.getitem(ops.reshape(self.logits, (1, self.n_actions)), np.zeros(self.n_agents, dtype=np.int64))


class IndividualLogits(MatrixPolicy):
    """A separate logit vector per agent."""

    representation = "individual"

    def __init__(self, n_agents, n_actions, rng=None):
        super().__init__(n_agents, n_actions)
        self.logits = param(np.zeros((n_agents, n_actions)))

    def agent_logits(self):
        return self.logits


class IdConditionedLogits(MatrixPolicy):
    """Shared linear map from the one-hot agent ID to logits."""

    representation = "id_conditioned"

    def __init__(self, n_agents, n_actions, rng=None):
        super().__init__(n_agents, n_actions)
        self.weight = param(np.zeros((n_agents, n_actions)))
        self.bias = param(np.zeros(n_actions))

    def agent_logits(self):
        return ops.matmul(Tensor(np.eye(self.n_agents)), self.weight) + self.bias


class ArLogitTables(MatrixPolicy):
    """Conditional logit tables ``pi(a^i | actions of i's predecessors)``.

    The context of agent ``i`` records, for each other agent, either its
    action or "not yet acted", so one table serves every execution order.
    """

    representation = "auto_regressive"
    needs_order = True

    def __init__(self, n_agents, n_actions, rng=None):
        super().__init__(n_agents, n_actions)
        self.n_contexts = (n_actions + 1) ** (n_agents - 1)
        self.logits = param(np.zeros((n_agents, self.n_contexts, n_actions)))
        self._others = [np.array([j for j in range(n_agents) if j != i], dtype=np.int64) for i in range(n_agents)]

    def context_index(self, agent: int, known: np.ndarray) -> np.ndarray:
        """Context ids ``[B]`` from ``known [B, n]`` holding actions or ``-1`` for unknown."""
        code = known[:, self._others[agent]] + 1
        base = (self.n_actions + 1) ** np.arange(self.n_agents - 2, -1, -1)
        return code @ base

    def _contexts(self, joint: np.ndarray, orders: np.ndarray) -> np.ndarray:
        """``[B, n]`` context id for each agent given the realized joint action and order."""
        b, n = joint.shape
        ctx = np.empty((b, n), dtype=np.int64)
        known = np.full((b, n), -1, dtype=np.int64)
        rows = np.arange(b)
        for p in range(n):
            agent = orders[:, p]
            for i in range(n):
                sel = agent == i
                if sel.any():
                    ctx[sel, i] = self.context_index(i, known[sel])
            known[rows, agent] = joint[rows, agent]
        return ctx

    def log_probs(self, joint, orders=None):
        if orders is None:
            raise ValueError("the auto-regressive policy needs an execution order")
        joint = np.asarray(joint, dtype=np.int64)
        orders = validate_order(orders, self.n_agents)
        ctx = self._contexts(joint, orders)
        agent_idx = np.broadcast_to(np.arange(self.n_agents), ctx.shape)
        logits = ops.getitem(self.logits, (agent_idx, ctx))
        return _logp_and_entropy(logits, joint)

    def sample(self, batch, rng, orders=None):
        if orders is None:
            orders = sample_orders(batch, self.n_agents, rng)
        orders = validate_order(orders, self.n_agents)
        probs = np.exp(ops.log_softmax(Tensor(self.logits.data), axis=-1).data)
        known = np.full((batch, self.n_agents), -1, dtype=np.int64)
        rows = np.arange(batch)
        for p in range(self.n_agents):
            agent = orders[:, p]
            ctx = np.empty(batch, dtype=np.int64)
            for i in range(self.n_agents):
                sel = agent == i
                if sel.any():
                    ctx[sel] = self.context_index(i, known[sel])
            pr = probs[agent, ctx]
            u = rng.random((batch, 1))
            known[rows, agent] = (u > np.cumsum(pr, axis=-1)).sum(axis=-1).clip(max=self.n_actions - 1)
        return known

    def joint_probs(self, order=None):
        """Joint distribution under ``order``, or the uniform mixture over all orders when ``None``."""
        joints = np.array(list(itertools.product(range(self.n_actions), repeat=self.n_agents)))
        if order is None:
            perms = list(itertools.permutations(range(self.n_agents)))
        else:
            perms = [tuple(validate_order(order, self.n_agents))]
        orders = np.repeat(np.array(perms), len(joints), axis=0)
        with no_grad():
            lp, _ = self.log_probs(np.tile(joints, (len(perms), 1)), orders)
        probs = np.exp(lp.data.sum(axis=1)).reshape(len(perms), len(joints)).mean(axis=0)
        return probs.reshape((self.n_actions,) * self.n_agents)


_CLASSES = {
    "shared": SharedLogits,
    "individual": IndividualLogits,
    "id_conditioned": IdConditionedLogits,
    "auto_regressive": ArLogitTables,
}


def make_matrix_policy(representation: str, n_agents: int, n_actions: int) -> MatrixPolicy:
    if representation not in _CLASSES:
        raise ValueError(f"unknown representation {representation!r}; expected one of {REPRESENTATIONS}")
    return _CLASSES[representation](n_agents, n_actions)


def sample_joint_action(policy: MatrixPolicy, rng, order=None) -> tuple[np.ndarray, np.ndarray]:
    """One joint action and its per-agent log-probs."""
    if policy.needs_order and order is None:
        raise ValueError("an execution order is required for the auto-regressive policy")
    orders = None if order is None else validate_order(order, policy.n_agents)[None]
    joint = policy.sample(1, rng, orders)
    with no_grad():
        lp, _ = policy.log_probs(joint, orders)
    return joint[0], lp.data[0]


def joint_logprob(policy: MatrixPolicy, joint, order=None) -> float:
    joint = np.asarray(joint, dtype=np.int64)[None]
    orders = None if order is None else validate_order(order, policy.n_agents)[None]
    if policy.needs_order and orders is None:
        raise ValueError("an execution order is required for the auto-regressive policy")
    with no_grad():
        lp, _ = policy.log_probs(joint, orders)
    return float(lp.data.sum())


def uniform_permutation_ar(n: int) -> ArLogitTables:
    """Constructed AR tables whose joint distribution is uniform over all ``n!`` permutations.

    Each agent puts equal mass on the actions its predecessors have not taken.
    """
    pol = ArLogitTables(n, n)
    table = np.zeros((n, pol.n_contexts, n))
    for ctx in range(pol.n_contexts):
        digits = np.array(np.unravel_index(ctx, (n + 1,) * (n - 1))) - 1
        taken = set(digits[digits >= 0].tolist())
        for a in taken:
            table[:, ctx, a] = -np.inf
    pol.logits.data = np.where(np.isinf(table), -1e3, table)
    return pol
