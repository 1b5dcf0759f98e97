"""Policy-gradient learners: matrix-game REINFORCE and Bridge PPO over four joint-policy representations."""

from .bridge_models import (
    ArAttentionActor,
    ArMlpActor,
    BridgeActor,
    BridgeCritic,
    MlpActor,
    ValueNormalizer,
    make_actor,
)
from .matrix_policies import (
    REPRESENTATIONS,
    ArLogitTables,
    IdConditionedLogits,
    IndividualLogits,
    MatrixPolicy,
    SharedLogits,
    joint_logprob,
    make_matrix_policy,
    sample_joint_action,
    uniform_permutation_ar,
)
from .orders import multistep_weights, positions, sample_execution_order, sample_orders, validate_order
from .ppo import (
    PPOConfig,
    act,
    bridge_episode_returns,
    compute_gae,
    eval_bridge_return,
    joint_policy_at,
    ppo_losses,
    ppo_update,
    state_policy_entropy,
    train_bridge_ppo,
)
from .reinforce import ReinforceConfig, expected_return, reinforce_loss, train_matrix_pg

__all__ = [
    "REPRESENTATIONS",
    "ArAttentionActor",
    "ArLogitTables",
    "ArMlpActor",
    "BridgeActor",
    "BridgeCritic",
    "IdConditionedLogits",
    "IndividualLogits",
    "MatrixPolicy",
    "MlpActor",
    "PPOConfig",
    "ReinforceConfig",
    "SharedLogits",
    "ValueNormalizer",
    "act",
    "bridge_episode_returns",
    "compute_gae",
    "eval_bridge_return",
    "expected_return",
    "joint_logprob",
    "joint_policy_at",
    "make_actor",
    "make_matrix_policy",
    "multistep_weights",
    "positions",
    "ppo_losses",
    "ppo_update",
    "reinforce_loss",
    "sample_execution_order",
    "sample_joint_action",
    "sample_orders",
    "state_policy_entropy",
    "train_bridge_ppo",
    "train_matrix_pg",
    "uniform_permutation_ar",
    "validate_order",
]
