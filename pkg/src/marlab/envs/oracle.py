"""Exact optimal returns for grid layouts by backward induction over the joint MDP."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .. import _kernels
from .._kernels import _fallback
from .bridge import N_ACTIONS, BridgeSpec, Layout, mirror_action

DONE = -1


@dataclass
class JointMDP:
    """Enumerated joint states and their deterministic transitions.

    ``states[k]`` holds one cell index per agent, or ``DONE``. ``next_state``
    is ``[n_states, n_joint_actions]`` and ``reward`` is the pre-move team
    reward of each state.
    """

    layout: Layout
    cells: list
    states: list
    index: dict
    joint_actions: np.ndarray
    next_state: np.ndarray
    reward: np.ndarray
    terminal: np.ndarray


def build_joint_mdp(layout: Layout, sum_rewards: bool = True) -> JointMDP:
    cells = layout.cell_list()
    n = layout.n_agents
    slots = list(range(len(cells))) + [DONE]
    states = []
    for combo in itertools.product(slots, repeat=n):
        live = [c for c in combo if c != DONE]
        if len(set(live)) == len(live):
            states.append(combo)
    index = {s: k for k, s in enumerate(states)}
    joint_actions = np.array(list(itertools.product(range(N_ACTIONS), repeat=n)), dtype=np.int64)
    n_s, n_a = len(states), len(joint_actions)

    pos = np.zeros((n_s * n_a, n, 2), dtype=np.int64)
    done = np.zeros((n_s * n_a, n), dtype=np.uint8)
    for k, s in enumerate(states):
        for i, c in enumerate(s):
            rows = slice(k * n_a, (k + 1) * n_a)
            if c == DONE:
                done[rows, i] = 1
                pos[rows, i] = layout.goals[i]
            else:
                pos[rows, i] = cells[c]
    actions = np.tile(joint_actions, (n_s, 1))
    per_agent = _kernels.bridge_step_batch(
        layout.valid_mask(), np.array(layout.goals), pos, done, actions, layout.penalty
    )
    team = per_agent.sum(axis=1) if sum_rewards else per_agent.mean(axis=1)
    cell_index = {c: i for i, c in enumerate(cells)}
    nxt = np.empty(n_s * n_a, dtype=np.int64)
    for row in range(n_s * n_a):
        key = tuple(DONE if done[row, i] else cell_index[tuple(pos[row, i])] for i in range(n))
        nxt[row] = index[key]
    reward = team.reshape(n_s, n_a)[:, 0].copy()
    terminal = np.array([all(c == DONE for c in s) for s in states])
    return JointMDP(layout, cells, states, index, joint_actions, nxt.reshape(n_s, n_a), reward, terminal)


def backward_induction(mdp: JointMDP) -> np.ndarray:
    """``V[t, s]``: best undiscounted return from state ``s`` with ``t`` steps already used."""
    H = mdp.layout.horizon
    V = np.zeros((H + 1, len(mdp.states)))
    for t in range(H - 1, -1, -1):
        V[t] = np.where(mdp.terminal, 0.0, mdp.reward + V[t + 1][mdp.next_state].max(axis=1))
    return V


def start_index(mdp: JointMDP) -> int:
    lay = mdp.layout
    return mdp.index[tuple(mdp.cells.index(tuple(s)) for s in lay.spawns)]


def optimal_return(layout: Layout, sum_rewards: bool = True) -> float:
    mdp = build_joint_mdp(layout, sum_rewards)
    return float(backward_induction(mdp)[0, start_index(mdp)])


@lru_cache(maxsize=32)
def bridge_optimal_return(spec: BridgeSpec) -> float:
    """Exact optimal undiscounted episode return of the Bridge instance."""
    return optimal_return(spec.layout(), spec.sum_agent_rewards)


def optimal_plan(layout: Layout, sum_rewards: bool = True) -> list[tuple[int, ...]]:
    """A greedy-from-DP optimal joint action sequence in world frame (lowest joint index on ties)."""
    mdp = build_joint_mdp(layout, sum_rewards)
    V = backward_induction(mdp)
    s = start_index(mdp)
    plan = []
    for t in range(layout.horizon):
        if mdp.terminal[s]:
            break
        a = int(np.argmax(V[t + 1][mdp.next_state[s]]))
        plan.append(tuple(int(x) for x in mdp.joint_actions[a]))
        s = int(mdp.next_state[s, a])
    return plan


def bridge_optimal_plan(spec: BridgeSpec) -> list[tuple[int, int]]:
    """Optimal plan expressed in each agent's own action frame, ready for ``bridge_step``."""
    plan = optimal_plan(spec.layout(), spec.sum_agent_rewards)
    if not spec.mirror_actions:
        return plan
    return [(a0, int(mirror_action(a1))) for a0, a1 in plan]


def open_loop_search(layout: Layout, sum_rewards: bool = True) -> float:
    """Best return over every open-loop joint action sequence, simulated step by step.

    Independent of the DP tables: it replays the pure-Python step kernel along
    each of the ``5**(n*H)`` plans. Exponential; tiny instances only.
    """
    valid = layout.valid_mask()
    goals = np.array(layout.goals, dtype=np.int64)
    joint_actions = list(itertools.product(range(N_ACTIONS), repeat=layout.n_agents))

    def best(pos: np.ndarray, done: np.ndarray, steps_left: int) -> float:
        if steps_left == 0 or done.all():
            return 0.0
        top = -np.inf
        for joint in joint_actions:
            p, d = pos.copy(), done.copy()
            r = _fallback.bridge_step_batch(valid, goals, p, d, np.array([joint]), layout.penalty)[0]
            team = r.sum() if sum_rewards else r.mean()
            top = max(top, team + best(p, d, steps_left - 1))
        return float(top)

    start = np.array([layout.spawns], dtype=np.int64)
    return best(start, np.zeros((1, layout.n_agents), dtype=np.uint8), layout.horizon)
