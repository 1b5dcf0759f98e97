"""Local (per-agent) Q representations and the numeric helpers built on them."""

from __future__ import annotations

import numpy as np

from ..diffcore import MLP, Module, Tensor, no_grad, ops
from ..diffcore.nn import param, uniform_init


class LocalQTable(Module):
    """``n_agents x n_actions`` trainable scalars for stateless games."""

    def __init__(self, n_agents: int, n_actions: int, rng: np.random.Generator):
        self.n_agents, self.n_actions = n_agents, n_actions
        self.table = param(uniform_init(rng, n_actions, (n_agents, n_actions)))

    def forward(self, batch: int) -> Tensor:
        """The table repeated ``batch`` times: ``[batch, n_agents, n_actions]``."""
        whole = ops.reshape(self.table, (1, self.n_agents, self.n_actions))
        return ops.getitem(whole, np.zeros(batch, dtype=np.int64))


class SharedQNet(Module):
    """One MLP mapping each agent's observation (optionally plus one-hot ID) to Q over actions."""

    def __init__(self, obs_dim, n_actions, n_agents, rng, id_conditioned: bool = False):
        self.obs_dim, self.n_actions, self.n_agents = obs_dim, n_actions, n_agents
        self.id_conditioned = id_conditioned
        self.net = MLP(obs_dim + (n_agents if id_conditioned else 0), n_actions, rng)

    def forward(self, obs) -> Tensor:
        obs = np.asarray(obs, dtype=np.float64)
        b, n, _ = obs.shape
        x = obs
        if self.id_conditioned:
            ids = np.broadcast_to(np.eye(n), (b, n, n))
            x = np.concatenate([obs, ids], axis=-1)
        q = self.net(Tensor(x.reshape(b * n, -1)))
        return ops.reshape(q, (b, n, self.n_actions))


def select(q_all: Tensor, joint) -> Tensor:
    """Chosen local values ``[B, n]`` from tables ``[B, n, A]`` and 0-based actions ``[B, n]``."""
    joint = np.asarray(joint, dtype=np.int64)
    picked = ops.take_along(q_all, joint[..., None], axis=-1)
    return ops.reshape(picked, joint.shape)


def igm_greedy(local_qs) -> tuple[int, ...]:
    """Per-agent argmax (0-based), ties going to the lowest action index."""
    return tuple(int(np.argmax(np.asarray(q, dtype=np.float64))) for q in local_qs)


def q_tot(mixer, local_qs, state=None, q_all=None, joint=None) -> float:
    """Scalar ``Q_tot`` for one set of chosen local values."""
    q = np.asarray(local_qs, dtype=np.float64)[None]
    s = np.ones((1, mixer.state_dim)) if state is None else np.asarray(state, dtype=np.float64)[None]
    with no_grad():
        out = mixer(
            Tensor(q),
            Tensor(s),
            None if q_all is None else Tensor(np.asarray(q_all, dtype=np.float64)[None]),
            None if joint is None else np.asarray(joint)[None],
        )
    return float(out.data[0])


def joint_q_table(mixer, table: np.ndarray, state=None) -> np.ndarray:
    """``Q_tot`` at every joint action of a stateless game, shaped ``(A,) * n``."""
    table = np.asarray(table, dtype=np.float64)
    n, a = table.shape
    joints = np.array(np.unravel_index(np.arange(a**n), (a,) * n)).T
    b = len(joints)
    q_all = np.broadcast_to(table, (b, n, a)).copy()
    chosen = q_all[np.arange(b)[:, None], np.arange(n)[None], joints]
    s = np.ones((b, mixer.state_dim)) if state is None else np.broadcast_to(state, (b, mixer.state_dim))
    with no_grad():
        out = mixer(Tensor(chosen), Tensor(np.array(s)), Tensor(q_all), joints)
    return out.data.reshape((a,) * n)


def advantage_tot(q_table: np.ndarray, joint) -> float:
    """``Q_tot(a) - max_a' Q_tot(a')``; never positive."""
    q_table = np.asarray(q_table, dtype=np.float64)
    return float(q_table[tuple(joint)] - q_table.max())
