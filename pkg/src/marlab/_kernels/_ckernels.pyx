# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels mirroring ``_fallback`` line for line."""

import numpy as np

cdef int DX[5]
cdef int DY[5]
DX[:] = [0, 0, 0, -1, 1]
DY[:] = [0, -1, 1, 0, 0]

DEF MAX_AGENTS = 16


def bridge_step_batch(const unsigned char[:, :] valid, const long long[:, :] goals,
                      long long[:, :, :] pos, unsigned char[:, :] done,
                      const long long[:, :] actions, double penalty):
    cdef Py_ssize_t n_envs = done.shape[0]
    cdef Py_ssize_t n_agents = done.shape[1]
    cdef Py_ssize_t n_cols = valid.shape[0]
    cdef Py_ssize_t n_rows = valid.shape[1]
    if n_agents > MAX_AGENTS:
        raise ValueError(f"at most {MAX_AGENTS} agents supported")
    rewards_arr = np.zeros((n_envs, n_agents))
    cdef double[:, :] rewards = rewards_arr
    cdef long long px[MAX_AGENTS]
    cdef long long py[MAX_AGENTS]
    cdef long long tx[MAX_AGENTS]
    cdef long long ty[MAX_AGENTS]
    cdef bint alive[MAX_AGENTS]
    cdef bint moving[MAX_AGENTS]
    cdef bint blocked[MAX_AGENTS]
    cdef Py_ssize_t e, i, j
    cdef long long a, nx, ny
    for e in range(n_envs):
        for i in range(n_agents):
            px[i] = pos[e, i, 0]
            py[i] = pos[e, i, 1]
            tx[i] = px[i]
            ty[i] = py[i]
            alive[i] = done[e, i] == 0
        for i in range(n_agents):
            if not alive[i]:
                continue
            rewards[e, i] = -penalty * (abs(px[i] - goals[i, 0]) + abs(py[i] - goals[i, 1]))
            a = actions[e, i]
            if a < 0 or a > 4:
                raise ValueError(f"action index {a} outside 0..4")
            nx = px[i] + DX[a]
            ny = py[i] + DY[a]
            if 0 <= nx < n_cols and 0 <= ny < n_rows and valid[nx, ny]:
                tx[i] = nx
                ty[i] = ny
        for i in range(n_agents):
            moving[i] = alive[i] and (tx[i] != px[i] or ty[i] != py[i])
            blocked[i] = False
        for i in range(n_agents):
            if not moving[i]:
                continue
            for j in range(n_agents):
                if j == i or not alive[j]:
                    continue
                if (tx[i] == px[j] and ty[i] == py[j]) or (
                        moving[j] and tx[i] == tx[j] and ty[i] == ty[j]):
                    blocked[i] = True
                    break
        for i in range(n_agents):
            if blocked[i]:
                tx[i] = px[i]
                ty[i] = py[i]
        for i in range(n_agents):
            if not alive[i]:
                continue
            pos[e, i, 0] = tx[i]
            pos[e, i, 1] = ty[i]
            if tx[i] == goals[i, 0] and ty[i] == goals[i, 1]:
                done[e, i] = 1
    return rewards_arr


def gae(const double[:, :] rewards, const double[:, :] values, const unsigned char[:, :] dones,
        double gamma, double lam):
    cdef Py_ssize_t n_steps = rewards.shape[0]
    cdef Py_ssize_t n_envs = rewards.shape[1]
    adv_arr = np.zeros((n_steps, n_envs))
    cdef double[:, :] adv = adv_arr
    cdef Py_ssize_t e, t
    cdef double last, keep, delta
    for e in range(n_envs):
        last = 0.0
        for t in range(n_steps - 1, -1, -1):
            keep = 1.0 - dones[t, e]
            delta = rewards[t, e] + gamma * values[t + 1, e] * keep - values[t, e]
            last = delta + gamma * lam * keep * last
            adv[t, e] = last
    return adv_arr
