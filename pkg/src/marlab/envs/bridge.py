"""Bridge: two agents cross a one-wide bridge in opposite directions.

Map (default ``L = 7``)::

    row 0:  S . B B B . G      <- corridor, columns 0..L-1, bridge = middle L-4 cells
    row 1:    W       W        <- waiting cells under columns 1 and L-2

Agent 0 spawns at ``(0, 0)`` and heads for ``(L-1, 0)``; agent 1 does the
reverse. Coordinates are ``(col, row)``. Moves are simultaneous and a move
succeeds only into a walkable cell that was empty at the start of the step
and that no other agent targets, so contested targets and swaps block
everyone involved. The per-step reward is ``-c`` times each live
agent's Manhattan distance to its goal, measured before the move.

Agent 1 sees a left-right mirrored world, and by default its actions are
interpreted in that mirrored frame too, so a shared policy that walks "right"
walks both agents toward their goals.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .. import _kernels

ACTIONS = ("idle", "up", "down", "left", "right")
IDLE, UP, DOWN, LEFT, RIGHT = range(5)
N_ACTIONS = 5
OBS_DIM = 6
SENTINEL = (-1.0, -1.0)
_MIRROR_ACTION = np.array([IDLE, UP, DOWN, RIGHT, LEFT], dtype=np.int64)


def mirror_action(a):
    return _MIRROR_ACTION[np.asarray(a, dtype=np.int64)]


@dataclass(frozen=True)
class Layout:
    """Generic grid instance: walkable cells, spawns and goals for each agent."""

    n_cols: int
    n_rows: int
    cells: frozenset
    spawns: tuple
    goals: tuple
    horizon: int = 50
    penalty: float = 0.01

    @property
    def n_agents(self) -> int:
        return len(self.spawns)

    def valid_mask(self) -> np.ndarray:
        mask = np.zeros((self.n_cols, self.n_rows), dtype=np.uint8)
        for c, r in self.cells:
            mask[c, r] = 1
        return mask

    def cell_list(self) -> list[tuple[int, int]]:
        return sorted(self.cells)


def corridor_layout(length: int, penalty: float = 0.01, horizon: int = 50) -> Layout:
    """Single agent walking a 1-row corridor from column 0 to ``length - 1``."""
    cells = frozenset((c, 0) for c in range(length))
    return Layout(length, 1, cells, ((0, 0),), ((length - 1, 0),), horizon, penalty)


@dataclass(frozen=True)
class BridgeSpec:
    corridor_length: int = 7
    waiting_columns: tuple | None = None
    horizon: int = 50
    penalty: float = 0.01
    gamma: float = 0.99
    sum_agent_rewards: bool = True
    mirror_actions: bool = True

    def __post_init__(self):
        L = self.corridor_length
        if L < 5:
            raise ValueError(f"corridor_length must be >= 5, got {L}")
        if self.waiting_columns is None:
            object.__setattr__(self, "waiting_columns", (1, L - 2))
        bridge = set(self.bridge_columns)
        for c in self.waiting_columns:
            if c in bridge or not 0 <= c < L:
                raise ValueError(f"waiting column {c} must be off the bridge {sorted(bridge)}")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")

    @property
    def bridge_columns(self) -> tuple[int, ...]:
        return tuple(range(2, self.corridor_length - 2))

    def layout(self) -> Layout:
        L = self.corridor_length
        cells = {(c, 0) for c in range(L)} | {(c, 1) for c in self.waiting_columns}
        spawns = ((0, 0), (L - 1, 0))
        goals = (spawns[1], spawns[0])
        return Layout(L, 2, frozenset(cells), spawns, goals, self.horizon, self.penalty)


@dataclass(frozen=True)
class BridgeState:
    positions: tuple  # ((col, row), (col, row))
    done: tuple  # (bool, bool)
    t: int = 0

    def mirrored(self, corridor_length: int) -> "BridgeState":
        """Swap the agents and reflect columns, giving the left-right mirror image."""
        flip = [(corridor_length - 1 - c, r) for c, r in self.positions]
        return BridgeState(tuple(reversed(flip)), tuple(reversed(self.done)), self.t)


@dataclass
class StepResult:
    rewards: np.ndarray
    state: BridgeState
    observations: np.ndarray
    done: bool

    @property
    def team_reward(self) -> float:
        return float(self.rewards.sum())


def _mirror_xy(c: float, r: float, L: int) -> tuple[float, float]:
    return (L - 1 - c, r)


def bridge_observe(spec: BridgeSpec, state: BridgeState, agent: int) -> np.ndarray:
    """6-dim ``[self, goal, ally]`` observation in the agent's own (mirrored for agent 1) frame."""
    L = spec.corridor_length
    lay = spec.layout()
    other = 1 - agent

    def frame(xy):
        return _mirror_xy(*xy, L) if agent == 1 else tuple(float(v) for v in xy)

    ally = SENTINEL if state.done[other] else frame(state.positions[other])
    return np.array([*frame(state.positions[agent]), *frame(lay.goals[agent]), *ally], dtype=np.float64)


def bridge_reset(spec: BridgeSpec) -> tuple[BridgeState, np.ndarray]:
    lay = spec.layout()
    state = BridgeState(lay.spawns, (False, False), 0)
    return state, observe_all(spec, state)


def observe_all(spec: BridgeSpec, state: BridgeState) -> np.ndarray:
    return np.stack([bridge_observe(spec, state, i) for i in range(2)])


def team_reward(spec: BridgeSpec, per_agent: np.ndarray) -> np.ndarray:
    """Combine per-agent penalties (last axis) according to ``sum_agent_rewards``."""
    return per_agent.sum(axis=-1) if spec.sum_agent_rewards else per_agent.mean(axis=-1)


def bridge_step(spec: BridgeSpec, state: BridgeState, joint_action) -> StepResult:
    """Pure transition: returns a new state; ``state`` is not modified."""
    if state.t >= spec.horizon or all(state.done):
        raise ValueError("bridge_step called on a terminal state")
    joint = np.asarray(joint_action, dtype=np.int64).reshape(1, 2)
    if joint.min() < 0 or joint.max() >= N_ACTIONS:
        raise ValueError(f"malformed joint action {joint_action!r}")
    if spec.mirror_actions:
        joint = joint.copy()
        joint[0, 1] = mirror_action(joint[0, 1])
    lay = spec.layout()
    pos = np.array([state.positions], dtype=np.int64)
    done = np.array([state.done], dtype=np.uint8)
    rewards = _kernels.bridge_step_batch(lay.valid_mask(), np.array(lay.goals), pos, done, joint, spec.penalty)[0]
    if not spec.sum_agent_rewards:
        rewards = rewards / 2.0
    new = BridgeState(
        tuple((int(c), int(r)) for c, r in pos[0]), tuple(bool(d) for d in done[0]), state.t + 1
    )
    finished = all(new.done) or new.t >= spec.horizon
    return StepResult(rewards, new, observe_all(spec, new), finished)


def state_from_positions(positions, done=(False, False), t: int = 0) -> BridgeState:
    return BridgeState(tuple(tuple(int(v) for v in p) for p in positions), tuple(bool(d) for d in done), t)


def bridge_end_state(spec: BridgeSpec) -> BridgeState:
    """Both agents alive, each standing on the bridge cell at its own end."""
    first = spec.bridge_columns[0]
    last = spec.bridge_columns[-1]
    return state_from_positions(((first, 0), (last, 0)), t=first)


@dataclass
class VecBridge:
    """Batch of independent Bridge episodes with automatic reset.

    Arrays use world coordinates; ``observations()`` applies per-agent mirroring.
    """

    spec: BridgeSpec
    n_envs: int
    pos: np.ndarray = field(init=False)
    done: np.ndarray = field(init=False)
    t: np.ndarray = field(init=False)

    def __post_init__(self):
        lay = self.spec.layout()
        self._valid = lay.valid_mask()
        self._goals = np.array(lay.goals, dtype=np.int64)
        self._spawns = np.array(lay.spawns, dtype=np.int64)
        self.reset()

    def reset(self) -> np.ndarray:
        self.pos = np.repeat(self._spawns[None], self.n_envs, axis=0).copy()
        self.done = np.zeros((self.n_envs, 2), dtype=np.uint8)
        self.t = np.zeros(self.n_envs, dtype=np.int64)
        return self.observations()

    def observations(self) -> np.ndarray:
        """``[n_envs, 2, 6]`` float observations."""
        L = self.spec.corridor_length
        obs = np.empty((self.n_envs, 2, OBS_DIM))
        own = self.pos.astype(np.float64)
        goals = np.repeat(self._goals[None].astype(np.float64), self.n_envs, axis=0)
        for agent in (0, 1):
            other = 1 - agent
            selfp, goal, ally = own[:, agent].copy(), goals[:, agent].copy(), own[:, other].copy()
            if agent == 1:
                for arr in (selfp, goal, ally):
                    arr[:, 0] = L - 1 - arr[:, 0]
            ally[self.done[:, other].astype(bool)] = SENTINEL
            obs[:, agent] = np.concatenate([selfp, goal, ally], axis=1)
        return obs

    def global_state(self) -> np.ndarray:
        """Centralized critic input: unmirrored positions of both agents plus done flags."""
        return np.concatenate(
            [self.pos.reshape(self.n_envs, 4).astype(np.float64), self.done.astype(np.float64)], axis=1
        )

    def step(self, actions: np.ndarray):
        """Step every env; finished episodes are reset in place.

        Args:
            actions: ``[n_envs, 2]`` actions in each agent's own frame.

        Returns:
            ``(team_rewards [E], per_agent_rewards [E, 2], episode_end [E] bool)``.
        """
        world = np.asarray(actions, dtype=np.int64).copy()
        if self.spec.mirror_actions:
            world[:, 1] = mirror_action(world[:, 1])
        per_agent = _kernels.bridge_step_batch(
            self._valid, self._goals, self.pos, self.done, world, self.spec.penalty
        )
        if not self.spec.sum_agent_rewards:
            per_agent = per_agent / 2.0
        self.t += 1
        ended = (self.done.all(axis=1)) | (self.t >= self.spec.horizon)
        if ended.any():
            self.pos[ended] = self._spawns
            self.done[ended] = 0
            self.t[ended] = 0
        return per_agent.sum(axis=1), per_agent, ended


def spec_with(spec: BridgeSpec, **changes) -> BridgeSpec:
    return replace(spec, **changes)
