"""PPO with a centralized per-agent critic for the Bridge environment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _kernels
from ..diffcore import NonFiniteError, Tensor, adam, backprop, no_grad, ops
from ..envs.bridge import N_ACTIONS, BridgeSpec, BridgeState, VecBridge, bridge_observe, mirror_action
from .bridge_models import N_AGENTS, NO_ACTION, BridgeActor, ValueNormalizer
from .orders import multistep_weights


@dataclass
class PPOConfig:
    iterations: int = 100
    n_envs: int = 32
    rollout_length: int = 100
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    value_clip: float = 0.2
    huber_delta: float = 10.0
    entropy_coef: float = 0.01
    learning_rate: float = 5e-4
    grad_norm_clip: float = 10.0
    epochs: int = 5
    minibatches: int = 1
    multi_step: bool = True
    randomize_order: bool = True

    @property
    def batch_steps(self) -> int:
        return self.n_envs * self.rollout_length


@dataclass
class Rollout:
    obs: np.ndarray  # [T, E, 2, 6]
    ally: np.ndarray  # [T, E, 2] ally action seen, or NO_ACTION
    actions: np.ndarray  # [T, E, 2] own-frame actions
    logp: np.ndarray  # [T, E, 2]
    alive: np.ndarray  # [T, E, 2]
    position: np.ndarray  # [T, E, 2] 0 for the agent acting first
    state: np.ndarray  # [T, E, 6]
    values: np.ndarray  # [T + 1, E, 2] normalized-space critic outputs
    rewards: np.ndarray  # [T, E]
    ended: np.ndarray  # [T, E]
    episode_returns: list = field(default_factory=list)


def ally_in_own_frame(actions: np.ndarray, spec: BridgeSpec) -> np.ndarray:
    """Each agent's view of the other's action, expressed in its own observation frame.

    ``actions[..., j]`` is agent ``j``'s action in its own action frame. Agent 1
    observes a mirrored world; with mirrored actions both conversions cancel
    except for the single mirror between two frames.
    """
    actions = np.asarray(actions, dtype=np.int64)
    world = actions.copy()
    if spec.mirror_actions:
        world[..., 1] = mirror_action(world[..., 1])
    seen = np.empty_like(actions)
    seen[..., 0] = world[..., 1]
    seen[..., 1] = mirror_action(world[..., 0])
    return seen


def _first_agent(batch: int, randomize: bool, rng) -> np.ndarray:
    return rng.integers(0, N_AGENTS, size=batch) if randomize else np.zeros(batch, dtype=np.int64)


def _sample(logp: np.ndarray, rng) -> np.ndarray:
    """Categorical samples from ``[..., A]`` log-probabilities."""
    cdf = np.cumsum(np.exp(logp), axis=-1)
    u = rng.random(cdf.shape[:-1] + (1,)) * cdf[..., -1:]
    return np.minimum((u > cdf).sum(axis=-1), N_ACTIONS - 1)


def act(actor: BridgeActor, obs, alive, spec: BridgeSpec, rng, randomize_order=True, greedy=False):
    """Joint action for a batch of observations.

    Returns ``(actions, log_probs, ally_inputs, positions)``, each ``[M, 2]``.
    Auto-regressive actors run twice: once for the first agent, once more for
    the second with the first agent's action visible, unless the first agent
    has already reached its goal.
    """
    m = obs.shape[0]
    rows = np.arange(m)
    with no_grad():
        ally = np.full((m, N_AGENTS), NO_ACTION, dtype=np.int64)
        logp = ops.log_softmax(actor.logits(obs, ally)).data
        pick = (lambda lp: lp.argmax(axis=-1)) if greedy else (lambda lp: _sample(lp, rng))
        actions = pick(logp)
        position = np.zeros((m, N_AGENTS), dtype=np.int64)
        if actor.needs_order:
            first = _first_agent(m, randomize_order, rng)
            second = 1 - first
            position[rows, second] = 1
            seen = ally_in_own_frame(actions, spec)
            visible = alive[rows, first].astype(bool)
            ally[rows[visible], second[visible]] = seen[rows[visible], second[visible]]
            logp = ops.log_softmax(actor.logits(obs, ally)).data
            redo = pick(logp)
            actions[rows, second] = redo[rows, second]
    chosen = np.take_along_axis(logp, actions[..., None], axis=-1)[..., 0]
    return actions, chosen, ally, position


def collect_rollout(actor, critic, norm: ValueNormalizer, env: VecBridge, cfg: PPOConfig, rng, running) -> Rollout:
    """Step ``env`` for ``cfg.rollout_length`` steps. ``running`` carries per-env partial returns."""
    T, E = cfg.rollout_length, env.n_envs
    r = Rollout(
        obs=np.empty((T, E, N_AGENTS, 6)),
        ally=np.empty((T, E, N_AGENTS), dtype=np.int64),
        actions=np.empty((T, E, N_AGENTS), dtype=np.int64),
        logp=np.empty((T, E, N_AGENTS)),
        alive=np.empty((T, E, N_AGENTS)),
        position=np.empty((T, E, N_AGENTS), dtype=np.int64),
        state=np.empty((T, E, 6)),
        values=np.empty((T + 1, E, N_AGENTS)),
        rewards=np.empty((T, E)),
        ended=np.empty((T, E), dtype=np.uint8),
    )
    for t in range(T):
        obs, state = env.observations(), env.global_state()
        alive = 1.0 - env.done
        actions, logp, ally, position = act(actor, obs, alive, env.spec, rng, cfg.randomize_order)
        with no_grad():
            r.values[t] = critic.values(state).data
        team, _, ended = env.step(actions)
        r.obs[t], r.ally[t], r.actions[t], r.logp[t] = obs, ally, actions, logp
        r.alive[t], r.position[t], r.state[t] = alive, position, state
        r.rewards[t], r.ended[t] = team, ended
        running += team
        for e in np.flatnonzero(ended):
            r.episode_returns.append(float(running[e]))
            running[e] = 0.0
    with no_grad():
        r.values[T] = critic.values(env.global_state()).data
    return r


def compute_gae(rewards, values, dones, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and return targets for ``[T, E]`` rollouts (``values`` is ``[T + 1, E]``)."""
    adv = _kernels.gae(rewards, values, dones, gamma, lam)
    return adv, adv + np.asarray(values)[:-1]


def ppo_losses(actor, critic, batch: dict, cfg: PPOConfig) -> tuple[Tensor, Tensor, dict]:
    """Clipped surrogate and clipped Huber value loss on a flat minibatch.

    ``batch`` keys: obs ``[M,2,6]``, ally, actions, old_logp, alive, weights,
    adv ``[M,2]``, state ``[M,6]``, old_v, target ``[M,2]`` (normalized).
    """
    logits = actor.logits(batch["obs"], batch["ally"])
    logp_all = ops.log_softmax(logits)
    logp = ops.reshape(ops.take_along(logp_all, batch["actions"][..., None], axis=-1), batch["actions"].shape)
    ratio = ops.exp(logp - Tensor(batch["old_logp"]))
    if not np.all(np.isfinite(ratio.data)):
        bad = np.argwhere(~np.isfinite(ratio.data))[0]
        raise NonFiniteError(f"non-finite importance ratio at sample {tuple(int(i) for i in bad)}")
    alive = batch["alive"]
    denom = max(float(alive.sum()), 1.0)
    adv = Tensor(batch["adv"] * batch["weights"])
    surr = ops.minimum(ratio * adv, ops.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv)
    policy_loss = -ops.tsum(surr * Tensor(alive)) / denom
    entropy = -ops.tsum(ops.exp(logp_all) * logp_all, axis=-1)
    mean_entropy = ops.tsum(entropy * Tensor(alive)) / denom
    actor_loss = policy_loss - cfg.entropy_coef * mean_entropy

    v = critic.values(batch["state"])
    old_v = Tensor(batch["old_v"])
    target = Tensor(batch["target"])
    v_clip = old_v + ops.clip(v - old_v, -cfg.value_clip, cfg.value_clip)
    value_loss = ops.mean(
        ops.maximum(ops.huber(v - target, cfg.huber_delta), ops.huber(v_clip - target, cfg.huber_delta))
    )
    info = {
        "policy_loss": float(policy_loss.data),
        "entropy": float(mean_entropy.data),
        "value_loss": float(value_loss.data),
    }
    return actor_loss, value_loss, info


def flatten_rollout(r: Rollout, norm: ValueNormalizer, cfg: PPOConfig, needs_order: bool) -> dict:
    T, E = r.rewards.shape
    rewards = np.repeat(r.rewards[..., None], N_AGENTS, axis=-1).reshape(T, E * N_AGENTS)
    dones = np.repeat(r.ended[..., None], N_AGENTS, axis=-1).reshape(T, E * N_AGENTS)
    values = norm.denormalize(r.values).reshape(T + 1, E * N_AGENTS)
    adv, ret = compute_gae(rewards, values, dones, cfg.gamma, cfg.gae_lambda)
    adv = adv.reshape(T * E, N_AGENTS)
    ret = ret.reshape(T * E, N_AGENTS)
    alive = r.alive.reshape(T * E, N_AGENTS)
    live = alive > 0
    if live.any():
        mu, sd = adv[live].mean(), adv[live].std()
        adv = (adv - mu) / (sd + 1e-8)
    norm.update(ret)
    pos = r.position.reshape(T * E, N_AGENTS)
    weights = multistep_weights(pos, cfg.multi_step).astype(np.float64) if needs_order else np.ones_like(adv)
    return {
        "obs": r.obs.reshape(T * E, N_AGENTS, 6),
        "ally": r.ally.reshape(T * E, N_AGENTS),
        "actions": r.actions.reshape(T * E, N_AGENTS),
        "old_logp": r.logp.reshape(T * E, N_AGENTS),
        "alive": alive,
        "weights": weights,
        "adv": adv,
        "state": r.state.reshape(T * E, 6),
        "old_v": r.values[:-1].reshape(T * E, N_AGENTS),
        "target": norm.normalize(ret),
    }


def ppo_update(actor, critic, actor_opt, critic_opt, batch: dict, cfg: PPOConfig, rng) -> dict:
    n = batch["adv"].shape[0]
    info = {}
    for _ in range(cfg.epochs):
        perm = rng.permutation(n) if cfg.minibatches > 1 else np.arange(n)
        for idx in np.array_split(perm, cfg.minibatches):
            mb = {k: v[idx] for k, v in batch.items()}
            actor_opt.zero_grad()
            critic_opt.zero_grad()
            actor_loss, value_loss, info = ppo_losses(actor, critic, mb, cfg)
            backprop(actor_loss)
            backprop(value_loss)
            actor_opt.step()
            critic_opt.step()
    return info


@dataclass
class IterationStats:
    iteration: int
    env_steps: int
    train_return: float
    policy_entropy: float
    value_loss: float


def train_bridge_ppo(actor, critic, spec: BridgeSpec, cfg: PPOConfig, rng, callback=None):
    """Run ``cfg.iterations`` collect-then-update rounds; ``callback(stats, actor)`` after each."""
    env = VecBridge(spec, cfg.n_envs)
    norm = ValueNormalizer()
    actor_opt = adam(actor.parameters(), cfg.learning_rate, cfg.grad_norm_clip)
    critic_opt = adam(critic.parameters(), cfg.learning_rate, cfg.grad_norm_clip)
    running = np.zeros(cfg.n_envs)
    last_return = float("nan")
    for it in range(1, cfg.iterations + 1):
        roll = collect_rollout(actor, critic, norm, env, cfg, rng, running)
        if roll.episode_returns:
            last_return = float(np.mean(roll.episode_returns))
        batch = flatten_rollout(roll, norm, cfg, actor.needs_order)
        info = ppo_update(actor, critic, actor_opt, critic_opt, batch, cfg, rng)
        stats = IterationStats(it, it * cfg.batch_steps, last_return, info["entropy"], info["value_loss"])
        if callback is not None:
            callback(stats, actor)
    return actor, critic, norm


def bridge_episode_returns(actor, spec: BridgeSpec, episodes: int, rng, greedy: bool | None = None,
                           randomize_order: bool = True) -> np.ndarray:
    """Undiscounted team return of each of ``episodes`` full episodes.

    ``greedy`` defaults to argmax actions, except for auto-regressive actors,
    which sample.
    """
    if greedy is None:
        greedy = not actor.needs_order
    env = VecBridge(spec, episodes)
    total = np.zeros(episodes)
    live = np.ones(episodes, dtype=bool)
    for _ in range(spec.horizon):
        actions, *_ = act(actor, env.observations(), 1.0 - env.done, spec, rng, randomize_order, greedy)
        team, _, ended = env.step(actions)
        total += np.where(live, team, 0.0)
        live &= ~ended
        if not live.any():
            break
    return total


def eval_bridge_return(actor, spec: BridgeSpec, episodes: int, rng, greedy: bool | None = None,
                       randomize_order: bool = True) -> float:
    return float(bridge_episode_returns(actor, spec, episodes, rng, greedy, randomize_order).mean())


def joint_policy_at(actor, spec: BridgeSpec, state: BridgeState, randomize_order: bool = True) -> np.ndarray:
    """Exact ``5 x 5`` joint action distribution at ``state`` (own-frame actions).

    Auto-regressive actors are marginalized over the execution order, uniform
    when orders are randomized and agent 0 first otherwise.
    """
    obs = np.stack([bridge_observe(spec, state, i) for i in range(N_AGENTS)])[None]
    alive = np.array([[not d for d in state.done]], dtype=np.float64)
    with no_grad():
        p0 = np.exp(ops.log_softmax(actor.logits(obs)).data[0])
        if not actor.needs_order:
            return np.outer(p0[0], p0[1])
        grid = np.array([(a, b) for a in range(N_ACTIONS) for b in range(N_ACTIONS)])
        seen = ally_in_own_frame(grid, spec)
        orders = [0, 1] if randomize_order else [0]
        joint = np.zeros((N_ACTIONS, N_ACTIONS))
        for first in orders:
            second = 1 - first
            ally = np.full((len(grid), N_AGENTS), NO_ACTION)
            if alive[0, first]:
                ally[:, second] = seen[:, second]
            cond = np.exp(ops.log_softmax(actor.logits(np.repeat(obs, len(grid), axis=0), ally)).data)
            p_first = p0[first][grid[:, first]]
            p_second = cond[np.arange(len(grid)), second, grid[:, second]]
            joint += (p_first * p_second).reshape(N_ACTIONS, N_ACTIONS) / len(orders)
    return joint


def state_policy_entropy(actor, spec: BridgeSpec, state: BridgeState, randomize_order: bool = True) -> float:
    """Entropy of the joint action distribution at ``state``, in nats."""
    p = joint_policy_at(actor, spec, state, randomize_order).ravel()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())
