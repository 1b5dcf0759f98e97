"""Value-decomposition learners: VDN, QMIX and QPLEX mixers, payoff fitting and Q-learning."""

from .fitting import DIVERGENCE_LIMIT, DivergenceError, fit_payoff, payoff_fit_error
from .localq import LocalQTable, SharedQNet, advantage_tot, igm_greedy, joint_q_table, q_tot, select
from .mixers import MIXERS, QMIX, QPLEX, VDN, Mixer, make_mixer
from .qlearning import (
    QLearnConfig,
    QLearnResult,
    TargetCopy,
    epsilon_greedy,
    greedy_bridge_return,
    qlearn_bridge,
    qlearn_matrix,
)
from .replay import ReplayBuffer

__all__ = [
    "DIVERGENCE_LIMIT",
    "MIXERS",
    "QMIX",
    "QPLEX",
    "VDN",
    "DivergenceError",
    "LocalQTable",
    "Mixer",
    "QLearnConfig",
    "QLearnResult",
    "ReplayBuffer",
    "SharedQNet",
    "TargetCopy",
    "advantage_tot",
    "epsilon_greedy",
    "fit_payoff",
    "greedy_bridge_return",
    "igm_greedy",
    "joint_q_table",
    "make_mixer",
    "payoff_fit_error",
    "q_tot",
    "qlearn_bridge",
    "qlearn_matrix",
    "select",
]
