"""Benchmark environments: XOR and permutation matrix games, the Bridge grid, and its exact oracle."""

from .bridge import (
    ACTIONS,
    N_ACTIONS,
    OBS_DIM,
    SENTINEL,
    BridgeSpec,
    BridgeState,
    Layout,
    StepResult,
    VecBridge,
    bridge_end_state,
    bridge_observe,
    bridge_reset,
    bridge_step,
    corridor_layout,
    mirror_action,
    observe_all,
    state_from_positions,
)
from .matrix import (
    MatrixGameSpec,
    PayoffTensor,
    constant_payoff,
    permutation_game,
    permutation_payoff,
    permutation_reward,
    read_payoff_csv,
    write_payoff_csv,
    xor_game,
    xor_payoff,
)
from .oracle import bridge_optimal_plan, bridge_optimal_return, open_loop_search, optimal_return

__all__ = [
    "ACTIONS",
    "N_ACTIONS",
    "OBS_DIM",
    "SENTINEL",
    "BridgeSpec",
    "BridgeState",
    "Layout",
    "MatrixGameSpec",
    "PayoffTensor",
    "StepResult",
    "VecBridge",
    "bridge_end_state",
    "bridge_observe",
    "bridge_optimal_plan",
    "bridge_optimal_return",
    "bridge_reset",
    "bridge_step",
    "constant_payoff",
    "corridor_layout",
    "mirror_action",
    "observe_all",
    "open_loop_search",
    "optimal_return",
    "permutation_game",
    "permutation_payoff",
    "permutation_reward",
    "read_payoff_csv",
    "state_from_positions",
    "write_payoff_csv",
    "xor_game",
    "xor_payoff",
]
