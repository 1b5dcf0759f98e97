"""Independent reference implementations used only by the tests.

None of these call into the package's numerical code paths; they restate each
rule directly so that agreement is evidence, not tautology.
"""

from __future__ import annotations

import itertools

import numpy as np

MOVES = {0: (0, 0), 1: (0, -1), 2: (0, 1), 3: (-1, 0), 4: (1, 0)}


def finite_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x`` (``x`` is perturbed in place and restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def gae_by_sums(rewards, values, dones, gamma, lam) -> np.ndarray:
    """GAE as the explicit truncated sum ``A_t = sum_k (gamma lam)^k delta_{t+k}``, stopped at episode ends."""
    rewards, values, dones = (np.asarray(a, dtype=float) for a in (rewards, values, dones))
    T = len(rewards)
    delta = [rewards[t] + gamma * values[t + 1] * (1 - dones[t]) - values[t] for t in range(T)]
    out = np.zeros(T)
    for t in range(T):
        total, w = 0.0, 1.0
        for k in range(t, T):
            total += w * delta[k]
            if dones[k]:
                break
            w *= gamma * lam
        out[t] = total
    return out


def reference_step(cells: set, goals, positions, done, actions, penalty: float):
    """One Bridge transition restated with sets.

    A live agent moves iff its target is a walkable cell, is not occupied by
    any live agent at the start of the step, and is not targeted by another
    live mover. Returns (new positions, new done, per-agent rewards).
    """
    n = len(positions)
    live = [not d for d in done]
    rewards = [-penalty * (abs(p[0] - g[0]) + abs(p[1] - g[1])) if a else 0.0
               for p, g, a in zip(positions, goals, live)]
    wanted = []
    for i in range(n):
        dx, dy = MOVES[int(actions[i])]
        t = (positions[i][0] + dx, positions[i][1] + dy)
        wanted.append(t if live[i] and t in cells and t != tuple(positions[i]) else None)
    occupied = {tuple(positions[j]) for j in range(n) if live[j]}
    new = [tuple(p) for p in positions]
    for i in range(n):
        t = wanted[i]
        if t is None:
            continue
        contested = any(wanted[j] == t for j in range(n) if j != i)
        if t not in occupied and not contested:
            new[i] = t
    new_done = [done[i] or (live[i] and new[i] == tuple(goals[i])) for i in range(n)]
    return new, new_done, rewards


def forward_optimal_return(cells: set, spawns, goals, horizon: int, penalty: float) -> float:
    """Best undiscounted return by forward dynamic programming over reachable (positions, done) sets."""
    n = len(spawns)
    joint_actions = list(itertools.product(range(5), repeat=n))
    frontier = {(tuple(map(tuple, spawns)), tuple([False] * n)): 0.0}
    best_done = -np.inf
    for _ in range(horizon):
        nxt: dict = {}
        for (pos, done), value in frontier.items():
            for joint in joint_actions:
                p2, d2, r = reference_step(cells, goals, list(pos), list(done), joint, penalty)
                key = (tuple(p2), tuple(d2))
                v = value + sum(r)
                if all(d2):
                    best_done = max(best_done, v)
                elif v > nxt.get(key, -np.inf):
                    nxt[key] = v
        frontier = nxt
    unfinished = max(frontier.values()) if frontier else -np.inf
    return float(max(best_done, unfinished))


def bridge_cells(length: int) -> set:
    return {(c, 0) for c in range(length)} | {(1, 1), (length - 2, 1)}


def softmax(x, axis=-1):
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def independent_joint(probs: np.ndarray) -> np.ndarray:
    """Outer product of per-agent distributions ``[n, A]``."""
    out = probs[0]
    for p in probs[1:]:
        out = np.multiply.outer(out, p)
    return out


def xor_return_by_enumeration(alpha: float) -> float:
    p = np.array([alpha, 1.0 - alpha])
    payoff = np.array([[0.0, 1.0], [1.0, 0.0]])
    return float(sum(p[a] * p[b] * payoff[a, b] for a in range(2) for b in range(2)))


def additive_least_squares(payoff: np.ndarray) -> float:
    """Minimal total squared error of ``q1[a] + q2[b]`` fitted to a 2-D payoff, by linear least squares."""
    A, B = payoff.shape
    design = np.zeros((A * B, A + B))
    for a in range(A):
        for b in range(B):
            design[a * B + b, a] = 1.0
            design[a * B + b, A + b] = 1.0
    coef, *_ = np.linalg.lstsq(design, payoff.ravel(), rcond=None)
    return float(((design @ coef - payoff.ravel()) ** 2).sum())


def entropy(p) -> float:
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def sampled_fd_error(loss_fn, params, rng, coords: int = 24, h: float = 1e-6) -> float:
    """Relative error between tape gradients and central differences on random parameter coordinates.

    ``loss_fn()`` returns a scalar tape tensor; gradients are read off ``p.grad``
    after the caller-independent backward pass done here.
    """
    from marlab.diffcore import backprop

    for p in params:
        p.grad = None
    backprop(loss_fn())
    picks = []
    for _ in range(coords):
        p = params[rng.integers(len(params))]
        picks.append((p, tuple(int(rng.integers(s)) for s in p.shape)))
    analytic = np.array([p.grad[i] if p.grad is not None else 0.0 for p, i in picks])
    numeric = []
    for p, i in picks:
        old = p.data[i]
        p.data[i] = old + h
        up = float(loss_fn().data)
        p.data[i] = old - h
        down = float(loss_fn().data)
        p.data[i] = old
        numeric.append((up - down) / (2 * h))
    return rel_error(analytic, np.array(numeric))
