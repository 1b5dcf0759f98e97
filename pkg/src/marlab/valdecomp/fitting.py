"""Supervised regression of a value-decomposition model onto a full payoff tensor."""

from __future__ import annotations

import numpy as np

from ..diffcore import Tensor, backprop, ops, sgd
from ..envs.matrix import PayoffTensor
from .localq import LocalQTable, joint_q_table, select

DIVERGENCE_LIMIT = 1e6


class DivergenceError(RuntimeError):
    """Raised when a fit's error grows past ``DIVERGENCE_LIMIT``."""


def payoff_fit_error(mixer, local: LocalQTable, payoff: PayoffTensor) -> float:
    """Sum over joint actions of ``(Q_tot - r)^2``."""
    q = joint_q_table(mixer, local.table.data)
    return float(((q - payoff.array) ** 2).sum())


def fit_payoff(mixer, local: LocalQTable, payoff: PayoffTensor, steps: int, lr: float = 0.1,
               callback=None) -> np.ndarray:
    """Full-batch SGD on the mean squared error over every joint action.

    Returns the total squared error curve; entry ``k`` is the error after ``k``
    updates, so the curve has ``steps + 1`` entries. ``callback(k, error)``
    sees each entry as it is computed.
    """
    joints = payoff.joint_actions()
    target = payoff.flat()
    b = len(joints)
    state = Tensor(np.ones((b, mixer.state_dim)))
    opt = sgd(local.parameters() + mixer.parameters(), lr)
    curve = np.empty(steps + 1)
    for k in range(steps + 1):
        q_all = local(b)
        pred = mixer(select(q_all, joints), state, q_all, joints)
        resid = pred - Tensor(target)
        err = float((resid.data**2).sum())
        curve[k] = err
        if callback is not None:
            callback(k, err)
        if not np.isfinite(err) or err > DIVERGENCE_LIMIT:
            raise DivergenceError(f"fit diverged at step {k}: error {err:.3g}")
        if k == steps:
            break
        opt.zero_grad()
        backprop(ops.mean(resid * resid))
        opt.step()
    return curve
