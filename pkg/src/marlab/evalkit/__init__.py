"""Measurements: entropies, joint-action histograms, fit errors and returns."""

from .entropy import (
    EntropyEstimate,
    JointActionHistogram,
    bridge_trajectory_entropy,
    entropy_of,
    joint_action_histogram,
    read_histogram_csv,
    trajectory_entropy,
    write_heatmap_csv,
    write_histogram_csv,
)
from .returns import (
    ReturnSummary,
    eval_return,
    matrix_expected_return,
    payoff_fit_error,
    plan_return,
    shared_policy_xor_return,
    state_policy_entropy,
)

__all__ = [
    "EntropyEstimate",
    "JointActionHistogram",
    "ReturnSummary",
    "bridge_trajectory_entropy",
    "entropy_of",
    "eval_return",
    "joint_action_histogram",
    "matrix_expected_return",
    "payoff_fit_error",
    "plan_return",
    "read_histogram_csv",
    "shared_policy_xor_return",
    "state_policy_entropy",
    "trajectory_entropy",
    "write_heatmap_csv",
    "write_histogram_csv",
]
