import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marlab.diffcore import NonFiniteError, adam, backprop, no_grad, ops
from marlab.envs import BridgeSpec, bridge_end_state, bridge_reset, permutation_game, xor_game
from marlab.evalkit import shared_policy_xor_return, trajectory_entropy
from marlab.pg import (
    REPRESENTATIONS,
    ArAttentionActor,
    ArLogitTables,
    ArMlpActor,
    BridgeCritic,
    MlpActor,
    PPOConfig,
    ValueNormalizer,
    act,
    compute_gae,
    expected_return,
    joint_logprob,
    joint_policy_at,
    make_actor,
    make_matrix_policy,
    multistep_weights,
    ppo_losses,
    ppo_update,
    reinforce_loss,
    sample_execution_order,
    sample_joint_action,
    state_policy_entropy,
    uniform_permutation_ar,
    validate_order,
)
from marlab.pg.bridge_models import NO_ACTION
from marlab.pg.ppo import ally_in_own_frame

from oracles import gae_by_sums, independent_joint, softmax, xor_return_by_enumeration
from soundness import normalization_errors

# advantages of the 3-step toy rollout, frozen from the explicit-sum oracle
TOY_ADVANTAGES = np.array([1.432567625, 0.46525, 0.5])


def _randomize(policy, rng, scale=1.5):
    for p in policy.parameters():
        p.data = rng.normal(scale=scale, size=p.shape)
    return policy


# -- execution orders ---------------------------------------------------------

def test_order_of_one_agent():
    assert sample_execution_order(1, np.random.default_rng(0)).tolist() == [0]


def test_two_agent_orders_balanced():
    rng = np.random.default_rng(1)
    first = np.array([sample_execution_order(2, rng)[0] for _ in range(20000)])
    assert abs(first.mean() - 0.5) < 3 * math.sqrt(0.25 / 20000)


def test_four_agent_orders_uniform():
    rng = np.random.default_rng(2)
    draws = 10**5
    perms = {p: i for i, p in enumerate(itertools.permutations(range(4)))}
    counts = np.zeros(24)
    for _ in range(draws):
        counts[perms[tuple(sample_execution_order(4, rng).tolist())]] += 1
    p = 1 / 24
    assert (np.abs(counts - draws * p) <= 3 * math.sqrt(draws * p * (1 - p))).all()


def test_invalid_order_rejected():
    with pytest.raises(ValueError):
        validate_order([0, 0, 1], 3)
    with pytest.raises(ValueError):
        joint_logprob(uniform_permutation_ar(3), [0, 1, 2], order=[0, 1])


def test_multistep_weights():
    w = multistep_weights(np.array([[2, 0, 1]]))
    # agent 2 acts first, then agent 0, then agent 1
    assert w.tolist() == [[2.0, 1.0, 3.0]]
    assert multistep_weights(np.array([[0]])).tolist() == [[1.0]]
    assert multistep_weights(np.array([[1, 0]]), multi_step=False).tolist() == [[1.0, 1.0]]


def test_single_agent_multistep_is_plain_reinforce():
    rng = np.random.default_rng(3)
    pol = _randomize(ArLogitTables(1, 3), rng)
    joint = rng.integers(0, 3, size=(64, 1))
    rewards = rng.normal(size=64)
    orders = np.zeros((64, 1), dtype=np.int64)
    a = reinforce_loss(pol, joint, rewards, orders, 0.0, multi_step=True)
    b = reinforce_loss(pol, joint, rewards, orders, 0.0, multi_step=False)
    assert a.item() == b.item()


# -- matrix policies ------------------------------------------------------------

def test_ar_xor_construction_samples_only_anti_diagonal():
    pol = uniform_permutation_ar(2)
    rng = np.random.default_rng(4)
    seen = [tuple(sample_joint_action(pol, rng, order=sample_execution_order(2, rng))[0]) for _ in range(4000)]
    assert set(seen) == {(0, 1), (1, 0)}
    share = seen.count((0, 1)) / len(seen)
    assert abs(share - 0.5) < 3 * math.sqrt(0.25 / 4000)


def test_ar_needs_an_order():
    with pytest.raises(ValueError):
        sample_joint_action(uniform_permutation_ar(2), np.random.default_rng(0))


def test_shared_marginals_identical():
    pol = _randomize(make_matrix_policy("shared", 3, 4), np.random.default_rng(5))
    with no_grad():
        logits = pol.agent_logits().data
    assert (logits == logits[0]).all()


def test_id_conditioned_can_differ_shared_cannot():
    rng = np.random.default_rng(6)
    idc = _randomize(make_matrix_policy("id_conditioned", 2, 2), rng)
    sh = _randomize(make_matrix_policy("shared", 2, 2), rng)
    with no_grad():
        assert not np.allclose(idc.agent_logits().data[0], idc.agent_logits().data[1])
        np.testing.assert_array_equal(sh.agent_logits().data[0], sh.agent_logits().data[1])


def test_joint_logprob_examples():
    assert joint_logprob(make_matrix_policy("individual", 2, 2), [0, 1]) == pytest.approx(math.log(0.25))
    assert joint_logprob(uniform_permutation_ar(2), [1, 0], order=[0, 1]) == pytest.approx(math.log(0.5), abs=1e-12)


@pytest.mark.parametrize("rep", REPRESENTATIONS)
@pytest.mark.parametrize("n", [1, 2, 3])
def test_factorization_normalizes(rep, n):
    assert max(normalization_errors(rep, n)) < 1e-6


@pytest.mark.parametrize("rep", ["shared", "individual", "id_conditioned"])
def test_independent_joint_matches_oracle(rep):
    pol = _randomize(make_matrix_policy(rep, 3, 3), np.random.default_rng(11))
    with no_grad():
        probs = softmax(pol.agent_logits().data)
    np.testing.assert_allclose(pol.joint_probs(), independent_joint(probs), atol=1e-14)


def test_ar_joint_matches_chain_rule_by_hand():
    pol = _randomize(ArLogitTables(2, 2), np.random.default_rng(12))
    lg = pol.logits.data
    # order (0, 1): agent 0 sees context "unknown" (index 0), agent 1 sees agent 0's action + 1
    want = np.zeros((2, 2))
    for a, b in itertools.product(range(2), repeat=2):
        want[a, b] = softmax(lg[0, 0])[a] * softmax(lg[1, a + 1])[b]
    np.testing.assert_allclose(pol.joint_probs(order=[0, 1]), want, atol=1e-14)


def test_shared_xor_formula_matches_enumeration():
    rng = np.random.default_rng(13)
    for alpha in rng.random(20):
        assert abs(shared_policy_xor_return(alpha) - xor_return_by_enumeration(alpha)) < 1e-12
        assert shared_policy_xor_return(alpha) <= 0.5


def test_shared_policy_expected_return_is_formula():
    pol = make_matrix_policy("shared", 2, 2)
    for z in np.linspace(-3, 3, 7):
        pol.logits.data = np.array([z, 0.0])
        alpha = softmax(pol.logits.data)[0]
        assert expected_return(pol, xor_game()) == pytest.approx(shared_policy_xor_return(alpha), abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_constructed_ar_is_uniform_over_permutations(n):
    pol = uniform_permutation_ar(n)
    est = trajectory_entropy(pol, permutation_game(n))
    assert est.value == pytest.approx(math.log(math.factorial(n)), abs=1e-6)
    assert expected_return(pol, permutation_game(n)) == pytest.approx(1.0, abs=1e-6)


def test_reinforce_gradient_vanishes_at_symmetric_saddle():
    pol = make_matrix_policy("individual", 2, 2)
    rng = np.random.default_rng(14)
    joint = pol.sample(200000, rng)
    rewards, _ = xor_game().step(joint)
    backprop(reinforce_loss(pol, joint, rewards, None, 0.0))
    assert np.abs(pol.logits.grad).max() < 0.01


# -- Bridge actors ------------------------------------------------------------

def _bridge_obs(spec=BridgeSpec()):
    return bridge_reset(spec)[1][None]


def test_shared_actor_cannot_distinguish_agents_id_actor_can():
    rng = np.random.default_rng(15)
    obs = _bridge_obs()  # both agents see the same observation at reset
    with no_grad():
        sh = MlpActor("shared", rng).logits(obs).data[0]
        idc = MlpActor("id_conditioned", rng).logits(obs).data[0]
        ind = MlpActor("individual", rng).logits(obs).data[0]
    np.testing.assert_array_equal(sh[0], sh[1])
    assert not np.allclose(idc[0], idc[1])
    assert not np.allclose(ind[0], ind[1])


def test_individual_actors_share_no_parameters():
    actor = MlpActor("individual", np.random.default_rng(0))
    a = {id(p) for p in actor.nets[0].parameters()}
    b = {id(p) for p in actor.nets[1].parameters()}
    assert not a & b


@pytest.mark.parametrize("cls", [ArAttentionActor, ArMlpActor])
def test_ar_actor_reacts_to_ally_action(cls):
    actor = cls(np.random.default_rng(16))
    obs = _bridge_obs()
    with no_grad():
        none = actor.logits(obs).data
        seen = actor.logits(obs, np.array([[NO_ACTION, 4]])).data
    np.testing.assert_array_equal(none[0, 0], seen[0, 0])
    assert not np.allclose(none[0, 1], seen[0, 1])


def test_attention_actor_ignores_dead_ally_slot():
    actor = ArAttentionActor(np.random.default_rng(17))
    obs = _bridge_obs().copy()
    obs[0, :, 4:6] = -1.0
    with no_grad():
        a = actor.logits(obs).data
        b = actor.logits(obs, np.array([[3, 4]])).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_ally_action_frames():
    spec = BridgeSpec()
    # both press their own "right": agent 0 sees the ally coming toward it (left), and vice versa
    assert ally_in_own_frame(np.array([[4, 4]]), spec).tolist() == [[3, 3]]
    assert ally_in_own_frame(np.array([[1, 0]]), spec).tolist() == [[0, 1]]


def test_act_second_agent_sees_first():
    spec = BridgeSpec()
    actor = ArMlpActor(np.random.default_rng(18))
    obs = np.repeat(_bridge_obs(), 50, axis=0)
    rng = np.random.default_rng(19)
    actions, logp, ally, position = act(actor, obs, np.ones((50, 2)), spec, rng)
    assert (np.sort(position, axis=1) == [0, 1]).all()
    seen = ally_in_own_frame(actions, spec)
    for m in range(50):
        first = int(np.argmin(position[m]))
        second = 1 - first
        assert ally[m, first] == NO_ACTION
        assert ally[m, second] == seen[m, second]
    assert (logp <= 0).all()


def test_act_hides_action_of_finished_first_agent():
    spec = BridgeSpec()
    actor = ArMlpActor(np.random.default_rng(20))
    obs = np.repeat(_bridge_obs(), 20, axis=0)
    alive = np.tile([[0.0, 1.0]], (20, 1))
    _, _, ally, position = act(actor, obs, alive, spec, np.random.default_rng(0), randomize_order=False)
    assert (position[:, 0] == 0).all()
    assert (ally == NO_ACTION).all()


@pytest.mark.parametrize("rep", ["shared", "id_conditioned", "individual", "auto_regressive"])
def test_joint_policy_at_is_a_distribution(rep):
    actor = make_actor(rep, np.random.default_rng(21))
    spec = BridgeSpec()
    p = joint_policy_at(actor, spec, bridge_end_state(spec))
    assert p.shape == (5, 5)
    assert abs(p.sum() - 1.0) < 1e-12 and (p >= 0).all()


def test_uniform_joint_policy_entropy_is_log_25():
    actor = MlpActor("shared", np.random.default_rng(22))
    actor.nets[0].head.weight.data[:] = 0.0
    spec = BridgeSpec()
    assert state_policy_entropy(actor, spec, bridge_end_state(spec)) == pytest.approx(math.log(25), abs=1e-12)


def test_critic_outputs():
    rng = np.random.default_rng(23)
    state = rng.normal(size=(4, 6))
    for rep in ("shared", "auto_regressive", "id_conditioned", "individual"):
        v = BridgeCritic(rep, rng).values(state).data
        assert v.shape == (4, 2)
        if rep in ("shared", "auto_regressive"):
            np.testing.assert_array_equal(v[:, 0], v[:, 1])


def test_value_normalizer_tracks_moments():
    rng = np.random.default_rng(24)
    chunks = [rng.normal(3.0, 2.0, size=n) for n in (10, 200, 37)]
    norm = ValueNormalizer()
    for c in chunks:
        norm.update(c)
    allx = np.concatenate(chunks)
    assert norm.mean == pytest.approx(allx.mean(), abs=1e-12)
    assert norm.var == pytest.approx(allx.var(), abs=1e-10)
    x = rng.normal(size=5)
    np.testing.assert_allclose(norm.denormalize(norm.normalize(x)), x, atol=1e-12)
    assert norm.var > 0


# -- GAE -------------------------------------------------------------------------

def test_gae_toy_matches_oracle():
    r, v, d = [1.0, 0.0, 1.0], [0.5, 0.5, 0.5, 0.0], [0, 0, 1]
    adv, ret = compute_gae(np.array(r)[:, None], np.array(v)[:, None], np.array(d)[:, None], 0.99, 0.95)
    np.testing.assert_allclose(adv[:, 0], TOY_ADVANTAGES, atol=1e-9)
    np.testing.assert_allclose(adv[:, 0], gae_by_sums(r, v, d, 0.99, 0.95), atol=1e-12)
    np.testing.assert_allclose(ret[:, 0], TOY_ADVANTAGES + 0.5, atol=1e-9)


def test_gae_single_step():
    adv, _ = compute_gae(np.array([[0.3]]), np.array([[0.2], [0.7]]), np.array([[0]]), 0.9, 0.95)
    assert adv[0, 0] == pytest.approx(0.3 + 0.9 * 0.7 - 0.2)
    adv, _ = compute_gae(np.array([[0.3]]), np.array([[0.2], [0.7]]), np.array([[1]]), 0.9, 0.95)
    assert adv[0, 0] == pytest.approx(0.1)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=12), st.floats(-1, 1))
def test_gae_telescopes_to_return_minus_value(rewards, v0):
    T = len(rewards)
    rng = np.random.default_rng(T)
    values = np.concatenate([[v0], rng.normal(size=T - 1), [0.0]])
    dones = np.zeros(T)
    dones[-1] = 1
    adv, _ = compute_gae(np.array(rewards)[:, None], values[:, None], dones[:, None], 1.0, 1.0)
    returns = np.cumsum(np.array(rewards)[::-1])[::-1]
    np.testing.assert_allclose(adv[:, 0], returns - values[:-1], atol=1e-9)


# -- PPO losses and updates ---------------------------------------------------------

def _ppo_batch(actor, critic, rng, m=16, log_ratio=0.0, adv=None):
    obs = np.repeat(_bridge_obs(), m, axis=0) + rng.normal(scale=0.1, size=(m, 2, 6))
    actions = rng.integers(0, 5, size=(m, 2))
    with no_grad():
        logp = ops.log_softmax(actor.logits(obs)).data
        v = critic.values(obs[:, 0]).data
    old = np.take_along_axis(logp, actions[..., None], axis=-1)[..., 0] - log_ratio
    return {
        "obs": obs, "ally": np.full((m, 2), NO_ACTION), "actions": actions, "old_logp": old,
        "alive": np.ones((m, 2)), "weights": np.ones((m, 2)),
        "adv": rng.normal(size=(m, 2)) if adv is None else adv,
        "state": obs[:, 0], "old_v": v, "target": v.copy(),
    }


def test_identical_policies_give_minus_mean_advantage():
    rng = np.random.default_rng(30)
    actor, critic = MlpActor("individual", rng), BridgeCritic("individual", rng)
    batch = _ppo_batch(actor, critic, rng)
    cfg = PPOConfig(entropy_coef=0.0)
    _, value_loss, info = ppo_losses(actor, critic, batch, cfg)
    assert info["policy_loss"] == pytest.approx(-batch["adv"].mean(), abs=1e-12)
    assert value_loss.item() == 0.0


def test_clipped_term_has_no_gradient():
    rng = np.random.default_rng(31)
    actor, critic = MlpActor("shared", rng), BridgeCritic("shared", rng)
    batch = _ppo_batch(actor, critic, rng, log_ratio=math.log(1.5), adv=np.ones((16, 2)))
    actor_loss, _, _ = ppo_losses(actor, critic, batch, PPOConfig(entropy_coef=0.0, clip=0.2))
    actor.zero_grad()
    backprop(actor_loss)
    for p in actor.parameters():
        assert p.grad is None or np.abs(p.grad).max() == 0.0


def test_unclipped_term_has_gradient():
    rng = np.random.default_rng(32)
    actor, critic = MlpActor("shared", rng), BridgeCritic("shared", rng)
    batch = _ppo_batch(actor, critic, rng, adv=np.ones((16, 2)))
    actor_loss, _, _ = ppo_losses(actor, critic, batch, PPOConfig(entropy_coef=0.0))
    backprop(actor_loss)
    assert any(p.grad is not None and np.abs(p.grad).max() > 0 for p in actor.parameters())


def test_zero_advantage_update_is_exact_noop():
    rng = np.random.default_rng(33)
    actor, critic = MlpActor("id_conditioned", rng), BridgeCritic("id_conditioned", rng)
    batch = _ppo_batch(actor, critic, rng, adv=np.zeros((16, 2)))
    before = {**actor.state_dict(), **{f"c.{k}": v for k, v in critic.state_dict().items()}}
    cfg = PPOConfig(entropy_coef=0.0, epochs=3)
    ppo_update(actor, critic, adam(actor.parameters(), 5e-4, 10.0), adam(critic.parameters(), 5e-4, 10.0),
               batch, cfg, np.random.default_rng(0))
    after = {**actor.state_dict(), **{f"c.{k}": v for k, v in critic.state_dict().items()}}
    for k in before:
        np.testing.assert_array_equal(before[k], after[k])


def test_non_finite_ratio_aborts_with_index():
    rng = np.random.default_rng(34)
    actor, critic = MlpActor("shared", rng), BridgeCritic("shared", rng)
    batch = _ppo_batch(actor, critic, rng)
    batch["old_logp"][3, 1] = np.nan
    with pytest.raises(NonFiniteError, match=r"\(3, 1\)"):
        ppo_losses(actor, critic, batch, PPOConfig())


def test_ar_weights_scale_the_surrogate():
    rng = np.random.default_rng(35)
    actor, critic = ArMlpActor(rng), BridgeCritic("auto_regressive", rng)
    batch = _ppo_batch(actor, critic, rng)
    cfg = PPOConfig(entropy_coef=0.0)
    _, _, base = ppo_losses(actor, critic, batch, cfg)
    batch["weights"] = np.full((16, 2), 2.0)
    _, _, doubled = ppo_losses(actor, critic, batch, cfg)
    assert doubled["policy_loss"] == pytest.approx(2 * base["policy_loss"], abs=1e-12)
