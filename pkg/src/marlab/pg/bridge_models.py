"""Bridge actors and critics.

Actors map per-agent observations ``[M, 2, 6]`` plus an ally-action input
``[M, 2]`` to logits ``[M, 2, 5]``. The ally-action input is ``-1`` when the
agent acts without seeing its ally's action (always, for the independent
representations) and otherwise holds the ally's action expressed in the
observer's own frame.
"""

from __future__ import annotations

import numpy as np

from ..diffcore import HIDDEN, MLP, AttentionBlock, Embedding, Linear, Module, Tensor, ops
from ..envs.bridge import N_ACTIONS, OBS_DIM

N_AGENTS = 2
STATE_DIM = 6
NO_ACTION = -1


def ally_dead(obs: np.ndarray) -> np.ndarray:
    """True where the ally slot holds the dead sentinel."""
    return np.all(obs[..., 4:6] == -1.0, axis=-1)


class BridgeActor(Module):
    representation = "base"
    needs_order = False

    def logits(self, obs, ally_action=None) -> Tensor:
        raise NotImplementedError


class MlpActor(BridgeActor):
    """PG-sh, PG-ID and PG-Ind actors built from 2-hidden-layer MLPs."""

    def __init__(self, representation: str, rng: np.random.Generator, hidden: int = HIDDEN):
        if representation not in ("shared", "id_conditioned", "individual"):
            raise ValueError(f"MlpActor does not support {representation!r}")
        self.representation = representation
        if representation == "individual":
            self.nets = [MLP(OBS_DIM, N_ACTIONS, rng, hidden) for _ in range(N_AGENTS)]
        else:
            extra = N_AGENTS if representation == "id_conditioned" else 0
            self.nets = [MLP(OBS_DIM + extra, N_ACTIONS, rng, hidden)]

    def logits(self, obs, ally_action=None):
        obs = np.asarray(obs, dtype=np.float64)
        m = obs.shape[0]
        if self.representation == "individual":
            return ops.stack([self.nets[i](Tensor(obs[:, i])) for i in range(N_AGENTS)], axis=1)
        x = obs
        if self.representation == "id_conditioned":
            x = np.concatenate([obs, np.broadcast_to(np.eye(N_AGENTS), (m, N_AGENTS, N_AGENTS))], axis=-1)
        out = self.nets[0](Tensor(x.reshape(m * N_AGENTS, -1)))
        return ops.reshape(out, (m, N_AGENTS, N_ACTIONS))


class ArAttentionActor(BridgeActor):
    """Auto-regressive actor on the slot-attention backbone.

    Slots are ``self``, ``goal`` and ``ally``, each with its own embedding.
    A visible ally action is embedded and added onto the ally slot. A dead
    ally's slot is masked out of the attention. The policy head reads the
    first output slot. No agent ID is used.
    """

    representation = "auto_regressive"
    needs_order = True

    def __init__(self, rng: np.random.Generator, dim: int = HIDDEN, heads: int = 4):
        self.dim = dim
        self.embed_self = Linear(2, dim, rng)
        self.embed_goal = Linear(2, dim, rng)
        self.embed_ally = Linear(2, dim, rng)
        self.embed_action = Embedding(N_ACTIONS, dim, rng)
        self.block = AttentionBlock(dim, heads, rng)
        self.head = MLP(dim, N_ACTIONS, rng, dim, n_hidden=1)

    def logits(self, obs, ally_action=None):
        obs = np.asarray(obs, dtype=np.float64)
        m = obs.shape[0]
        flat = obs.reshape(m * N_AGENTS, OBS_DIM)
        rows = m * N_AGENTS
        if ally_action is None:
            ally_action = np.full((m, N_AGENTS), NO_ACTION)
        act = np.asarray(ally_action, dtype=np.int64).reshape(rows)
        onehot = np.zeros((rows, N_ACTIONS))
        seen = act >= 0
        onehot[np.flatnonzero(seen), act[seen]] = 1.0
        ally = self.embed_ally(Tensor(flat[:, 4:6])) + self.embed_action(onehot)
        slots = ops.stack([self.embed_self(Tensor(flat[:, 0:2])), self.embed_goal(Tensor(flat[:, 2:4])), ally], axis=1)
        mask = np.ones((rows, 3), dtype=bool)
        mask[:, 2] = ~ally_dead(flat)
        out = self.block(slots, mask)
        first = ops.reshape(ops.getitem(out, (slice(None), 0)), (rows, self.dim))
        return ops.reshape(self.head(first), (m, N_AGENTS, N_ACTIONS))


class ArMlpActor(BridgeActor):
    """Auto-regressive actor without attention: an MLP on the observation and a one-hot ally action."""

    representation = "auto_regressive"
    needs_order = True

    def __init__(self, rng: np.random.Generator, hidden: int = HIDDEN):
        self.net = MLP(OBS_DIM + N_ACTIONS + 1, N_ACTIONS, rng, hidden)

    def logits(self, obs, ally_action=None):
        obs = np.asarray(obs, dtype=np.float64)
        m = obs.shape[0]
        rows = m * N_AGENTS
        if ally_action is None:
            ally_action = np.full((m, N_AGENTS), NO_ACTION)
        act = np.asarray(ally_action, dtype=np.int64).reshape(rows)
        extra = np.zeros((rows, N_ACTIONS + 1))
        seen = act >= 0
        extra[np.flatnonzero(seen), act[seen]] = 1.0
        extra[~seen, N_ACTIONS] = 1.0
        x = np.concatenate([obs.reshape(rows, OBS_DIM), extra], axis=1)
        return ops.reshape(self.net(Tensor(x)), (m, N_AGENTS, N_ACTIONS))


def make_actor(representation: str, rng, attention: bool = True) -> BridgeActor:
    if representation == "auto_regressive":
        return ArAttentionActor(rng) if attention else ArMlpActor(rng)
    return MlpActor(representation, rng)


class BridgeCritic(Module):
    """Centralized value of the global state, one output per agent.

    Shared and auto-regressive learners use one network whose value is the
    same for both agents; ID-conditioned adds the one-hot agent ID; individual
    learners have one network per agent.
    """

    def __init__(self, representation: str, rng: np.random.Generator, hidden: int = HIDDEN):
        self.representation = representation
        if representation == "individual":
            self.nets = [MLP(STATE_DIM, 1, rng, hidden) for _ in range(N_AGENTS)]
        elif representation == "id_conditioned":
            self.nets = [MLP(STATE_DIM + N_AGENTS, 1, rng, hidden)]
        else:
            self.nets = [MLP(STATE_DIM, 1, rng, hidden)]

    def values(self, state) -> Tensor:
        """Normalized-space values ``[M, 2]``."""
        state = np.asarray(state, dtype=np.float64)
        m = state.shape[0]
        if self.representation == "individual":
            return ops.concat([net(Tensor(state)) for net in self.nets], axis=1)
        if self.representation == "id_conditioned":
            x = np.concatenate(
                [np.repeat(state[:, None], N_AGENTS, axis=1), np.broadcast_to(np.eye(N_AGENTS), (m, N_AGENTS, N_AGENTS))],
                axis=-1,
            )
            return ops.reshape(self.nets[0](Tensor(x.reshape(m * N_AGENTS, -1))), (m, N_AGENTS))
        v = self.nets[0](Tensor(state))
        return ops.concat([v, v], axis=1)


class ValueNormalizer:
    """Running mean and variance of return targets (parallel-update formula)."""

    def __init__(self, eps: float = 1e-5):
        self.mean, self.var, self.count, self.eps = 0.0, 1.0, 0.0, eps

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64).ravel()
        n = x.size
        if n == 0:
            return
        b_mean, b_var = float(x.mean()), float(x.var())
        total = self.count + n
        delta = b_mean - self.mean
        if self.count == 0:
            self.mean, self.var = b_mean, b_var
        else:
            m2 = self.var * self.count + b_var * n + delta**2 * self.count * n / total
            self.mean = self.mean + delta * n / total
            self.var = m2 / total
        self.count = total

    @property
    def std(self) -> float:
        return float(np.sqrt(max(self.var, 0.0) + self.eps))

    def normalize(self, x):
        return (np.asarray(x) - self.mean) / self.std

    def denormalize(self, x):
        return np.asarray(x) * self.std + self.mean

    def state_dict(self) -> dict:
        return {"mean": self.mean, "var": self.var, "count": self.count}

    def load_state_dict(self, d: dict) -> None:
        self.mean, self.var, self.count = float(d["mean"]), float(d["var"]), float(d["count"])
