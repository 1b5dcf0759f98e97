"""Mixing functions that combine per-agent local Q-values into a global ``Q_tot``.

Every mixer takes the chosen local values ``q_chosen [B, n]``, a state batch
``state [B, d]`` and the full local tables ``q_all [B, n, A]`` (only QPLEX uses
the tables, to form advantages) and returns ``Q_tot [B]``.
"""

from __future__ import annotations

import numpy as np

from ..diffcore import HIDDEN, Linear, Module, Tensor, ops
from ..diffcore.nn import param

POSITIVE_FLOOR = 1e-10


class Mixer(Module):
    kind = "base"

    def __init__(self, n_agents: int, n_actions: int, state_dim: int):
        self.n_agents, self.n_actions, self.state_dim = n_agents, n_actions, state_dim

    def forward(self, q_chosen: Tensor, state, q_all: Tensor | None = None, joint=None) -> Tensor:
        raise NotImplementedError


class VDN(Mixer):
    """``Q_tot = sum_i w_i Q_i`` with one trainable weight per agent."""

    kind = "vdn"

    def __init__(self, n_agents: int, n_actions: int, state_dim: int = 1, rng=None):
        super().__init__(n_agents, n_actions, state_dim)
        self.weight = param(np.ones(n_agents))

    def forward(self, q_chosen, state=None, q_all=None, joint=None):
        return ops.tsum(ops.as_tensor(q_chosen) * self.weight, axis=-1)


class QMIX(Mixer):
    """Monotonic two-layer mixing network whose weights come from state hypernets.

    The weight hypernets are single linear layers of the state. Their outputs
    pass through ``abs`` so every mixing weight is non-negative, which makes
    ``Q_tot`` monotone in each ``Q_i``. ``embed`` is the mixing layer width.
    """

    kind = "qmix"

    def __init__(self, n_agents, n_actions, state_dim, rng, embed: int = HIDDEN):
        super().__init__(n_agents, n_actions, state_dim)
        self.embed = embed
        self.hyper_w1 = Linear(state_dim, n_agents * embed, rng)
        self.hyper_w2 = Linear(state_dim, embed, rng)
        self.hyper_b1 = Linear(state_dim, embed, rng)
        self.hyper_v1 = Linear(state_dim, embed, rng)
        self.hyper_v2 = Linear(embed, 1, rng)

    def mixing_weights(self, state) -> tuple[Tensor, Tensor]:
        s = ops.as_tensor(state)
        b = s.shape[0]
        w1 = ops.absolute(ops.reshape(self.hyper_w1(s), (b, self.n_agents, self.embed)))
        return w1, ops.absolute(self.hyper_w2(s))

    def forward(self, q_chosen, state, q_all=None, joint=None):
        s = ops.as_tensor(state)
        q = ops.as_tensor(q_chosen)
        b = q.shape[0]
        w1, w2 = self.mixing_weights(s)
        hidden = ops.elu(
            ops.reshape(ops.matmul(ops.reshape(q, (b, 1, self.n_agents)), w1), (b, self.embed))
            + self.hyper_b1(s)
        )
        v = self.hyper_v2(ops.relu(self.hyper_v1(s)))
        return ops.tsum(hidden * w2, axis=-1) + ops.reshape(v, (b,))


class QPLEX(Mixer):
    """Duplex dueling mixer.

    Local values are transformed as ``Q_i' = w_i(s) Q_i + b_i(s)`` with
    ``w_i > 0``; the global value is ``sum_i V_i' + sum_i lambda_i(s, a) A_i'``
    where ``V_i = max_a Q_i`` and ``A_i' = w_i (Q_i - V_i) <= 0``. The
    importance weights come from a multi-head attention over the state and the
    one-hot joint action, so ``lambda_i > 0``.
    With ``detach_advantage`` (the default) the advantage term is a constant
    for backprop, so gradients are those of a surrogate; turn it off to get
    the exact derivative of ``Q_tot``.
    At the joint action of local argmaxes every advantage is zero, which is
    what guarantees that greedy local actions are globally greedy.
    """

    kind = "qplex"

    def __init__(self, n_agents, n_actions, state_dim, rng, heads: int = 4, embed: int = HIDDEN,
                 detach_advantage: bool = True):
        super().__init__(n_agents, n_actions, state_dim)
        self.heads, self.embed = heads, embed
        self.detach_advantage = detach_advantage
        self.hyper_w = Linear(state_dim, n_agents, rng)
        self.hyper_b = Linear(state_dim, n_agents, rng)
        self.key_hidden = Linear(state_dim, embed, rng)
        self.key_out = Linear(embed, heads, rng)
        self.agent_hidden = Linear(state_dim, embed, rng)
        self.agent_out = Linear(embed, heads * n_agents, rng)
        self.action_hidden = Linear(state_dim + n_agents * n_actions, embed, rng)
        self.action_out = Linear(embed, heads * n_agents, rng)

    def transform(self, state) -> tuple[Tensor, Tensor]:
        s = ops.as_tensor(state)
        return ops.absolute(self.hyper_w(s)) + POSITIVE_FLOOR, self.hyper_b(s)

    def importance(self, state, joint) -> Tensor:
        """``lambda [B, n]`` for the 0-based joint actions ``joint [B, n]``.

        Per head: ``|key(s)| * sigmoid(agent(s))_i * sigmoid(action(s, a))_i``,
        summed over heads.
        """
        s = ops.as_tensor(state)
        joint = np.asarray(joint, dtype=np.int64)
        b = s.shape[0]
        onehot = np.zeros((b, self.n_agents * self.n_actions))
        cols = np.arange(self.n_agents) * self.n_actions + joint
        onehot[np.arange(b)[:, None], cols] = 1.0
        shape = (b, self.heads, self.n_agents)
        key = ops.absolute(self.key_out(ops.relu(self.key_hidden(s)))) + POSITIVE_FLOOR
        agent = ops.sigmoid(ops.reshape(self.agent_out(ops.relu(self.agent_hidden(s))), shape))
        sa = ops.concat([s, Tensor(onehot)], axis=-1)
        action = ops.sigmoid(ops.reshape(self.action_out(ops.relu(self.action_hidden(sa))), shape))
        return ops.tsum(ops.reshape(key, (b, self.heads, 1)) * agent * action, axis=1)

    def forward(self, q_chosen, state, q_all=None, joint=None):
        if q_all is None or joint is None:
            raise ValueError("QPLEX needs the full local Q tables and the joint action")
        q = ops.as_tensor(q_chosen)
        q_all = ops.as_tensor(q_all)
        w, bias = self.transform(state)
        # max_a Q_i, differentiated through the greedy entry
        v_local = ops.tsum(q_all * Tensor(_argmax_onehot(q_all.data)), axis=-1)
        q_t = q * w + bias
        adv = (q - v_local) * w
        if self.detach_advantage:
            adv = adv.detach()
        lam = self.importance(state, joint)
        # sum_i Q_i' + sum_i (lambda_i - 1) A_i' equals sum_i V_i' + sum_i lambda_i A_i';
        # the advantage is held fixed so local values learn through Q_i' only
        return ops.tsum(q_t, axis=-1) + ops.tsum((lam - 1.0) * adv, axis=-1)


def _argmax_onehot(q: np.ndarray) -> np.ndarray:
    """One-hot of the lowest-index argmax along the last axis."""
    out = np.zeros_like(q)
    np.put_along_axis(out, q.argmax(axis=-1)[..., None], 1.0, axis=-1)
    return out


MIXERS = {"vdn": VDN, "qmix": QMIX, "qplex": QPLEX}


def make_mixer(kind: str, n_agents: int, n_actions: int, state_dim: int, rng, embed: int = HIDDEN) -> Mixer:
    if kind == "vdn":
        return VDN(n_agents, n_actions, state_dim)
    if kind == "qmix":
        return QMIX(n_agents, n_actions, state_dim, rng, embed=embed)
    if kind == "qplex":
        return QPLEX(n_agents, n_actions, state_dim, rng, embed=embed)
    raise ValueError(f"unknown mixer {kind!r}; expected one of {sorted(MIXERS)}")
