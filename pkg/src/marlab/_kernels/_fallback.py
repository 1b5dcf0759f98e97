"""Pure-Python kernels. Same signatures and results as the compiled ``_ckernels``."""

from __future__ import annotations

import numpy as np

# idle, up, down, left, right
DX = (0, 0, 0, -1, 1)
DY = (0, -1, 1, 0, 0)


def bridge_step_batch(valid, goals, pos, done, actions, penalty):
    """Advance every environment in the batch by one simultaneous move, in place.

    A move succeeds only if the target is walkable, was empty at the start of
    the step, and no other agent targets it. Swaps are therefore impossible.

    Args:
        valid: uint8 ``[n_cols, n_rows]`` walkable-cell mask.
        goals: int64 ``[n_agents, 2]`` goal cell per agent.
        pos: int64 ``[n_envs, n_agents, 2]`` positions, overwritten.
        done: uint8 ``[n_envs, n_agents]`` arrival flags, overwritten.
        actions: int64 ``[n_envs, n_agents]`` world-frame action indices.
        penalty: per-unit distance penalty.

    Returns:
        float64 ``[n_envs, n_agents]`` per-agent rewards, measured before the move.
    """
    n_envs, n_agents = done.shape
    n_cols, n_rows = valid.shape
    rewards = np.zeros((n_envs, n_agents))
    for e in range(n_envs):
        px = [int(pos[e, i, 0]) for i in range(n_agents)]
        py = [int(pos[e, i, 1]) for i in range(n_agents)]
        alive = [not done[e, i] for i in range(n_agents)]
        tx = list(px)
        ty = list(py)
        for i in range(n_agents):
            if not alive[i]:
                continue
            rewards[e, i] = -penalty * (abs(px[i] - goals[i, 0]) + abs(py[i] - goals[i, 1]))
            a = int(actions[e, i])
            if a < 0 or a > 4:
                raise ValueError(f"action index {a} outside 0..4")
            nx, ny = px[i] + DX[a], py[i] + DY[a]
            if 0 <= nx < n_cols and 0 <= ny < n_rows and valid[nx, ny]:
                tx[i], ty[i] = nx, ny
        # contested targets block every contender; occupied targets block the mover
        moving = [alive[i] and (tx[i] != px[i] or ty[i] != py[i]) for i in range(n_agents)]
        blocked = [False] * n_agents
        for i in range(n_agents):
            if not moving[i]:
                continue
            for j in range(n_agents):
                if j == i or not alive[j]:
                    continue
                if (tx[i] == px[j] and ty[i] == py[j]) or (
                    moving[j] and tx[i] == tx[j] and ty[i] == ty[j]
                ):
                    blocked[i] = True
                    break
        for i in range(n_agents):
            if blocked[i]:
                tx[i], ty[i] = px[i], py[i]
        for i in range(n_agents):
            if not alive[i]:
                continue
            pos[e, i, 0] = tx[i]
            pos[e, i, 1] = ty[i]
            if tx[i] == goals[i, 0] and ty[i] == goals[i, 1]:
                done[e, i] = 1
    return rewards


def gae(rewards, values, dones, gamma, lam):
    """Generalized advantage estimates for ``[T, E]`` rollouts.

    ``values`` has ``T + 1`` rows; ``dones[t]`` marks that the episode ended
    after step ``t`` so nothing is bootstrapped across it.
    """
    n_steps, n_envs = rewards.shape
    adv = np.zeros((n_steps, n_envs))
    for e in range(n_envs):
        last = 0.0
        for t in range(n_steps - 1, -1, -1):
            keep = 1.0 - float(dones[t, e])
            delta = rewards[t, e] + gamma * values[t + 1, e] * keep - values[t, e]
            last = delta + gamma * lam * keep * last
            adv[t, e] = last
    return adv
