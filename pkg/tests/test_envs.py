import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marlab.envs import (
    SENTINEL,
    BridgeSpec,
    VecBridge,
    bridge_end_state,
    bridge_observe,
    bridge_optimal_plan,
    bridge_optimal_return,
    bridge_reset,
    bridge_step,
    corridor_layout,
    mirror_action,
    open_loop_search,
    optimal_return,
    permutation_game,
    permutation_payoff,
    permutation_reward,
    read_payoff_csv,
    state_from_positions,
    write_payoff_csv,
    xor_game,
    xor_payoff,
)
from marlab.envs.bridge import Layout
from marlab.evalkit import plan_return

from oracles import bridge_cells, forward_optimal_return

# joint-MDP value of the default instance, frozen from the forward-search oracle
V_STAR_DEFAULT = -0.74


def test_xor_table():
    p = xor_payoff()
    assert p.entry(1, 2) == 1
    assert p.entry(1, 1) == 0
    assert p.entry(2, 1) == 1
    assert p.entry(2, 2) == 0


def test_permutation_reward_examples():
    assert permutation_reward(4, (1, 2, 3, 4)) == 1
    assert permutation_reward(4, (1, 1, 2, 3)) == 0
    assert permutation_reward(2, (2, 1)) == 1
    with pytest.raises(ValueError):
        permutation_reward(4, (0, 1, 2, 3))
    with pytest.raises(ValueError):
        permutation_reward(3, (1, 2, 4))


def test_permutation_two_matches_xor():
    np.testing.assert_array_equal(permutation_payoff(2).array, xor_payoff().array)


@given(st.lists(st.integers(1, 4), min_size=4, max_size=4), st.permutations(range(4)))
def test_permutation_reward_agent_relabeling(actions, perm):
    assert permutation_reward(4, actions) == permutation_reward(4, [actions[i] for i in perm])


def test_matrix_games_are_one_step():
    for game in (xor_game(), permutation_game(3)):
        rewards, done = game.step(np.zeros((1, game.n_agents), dtype=int))
        assert done and rewards.shape == (1,)
        assert game.horizon == 1


def test_payoff_csv_round_trip(tmp_path):
    p = permutation_payoff(3)
    write_payoff_csv(p, tmp_path / "p.csv")
    np.testing.assert_array_equal(read_payoff_csv(tmp_path / "p.csv").array, p.array)


def test_payoff_rejects_non_finite():
    from marlab.envs import PayoffTensor

    with pytest.raises(ValueError):
        PayoffTensor(np.array([[0.0, np.nan]]))


def test_reset_positions():
    spec = BridgeSpec()
    state, obs = bridge_reset(spec)
    assert state.positions == ((0, 0), (6, 0))
    assert obs.shape == (2, 6)
    # each agent sees itself at the origin of its own frame, heading for column 6
    np.testing.assert_array_equal(obs[0], obs[1])


def test_spec_validation():
    with pytest.raises(ValueError):
        BridgeSpec(corridor_length=4)
    with pytest.raises(ValueError):
        BridgeSpec(waiting_columns=(1, 3))
    lay = BridgeSpec().layout()
    assert lay.goals == (lay.spawns[1], lay.spawns[0])


def _step(spec, positions, joint, done=(False, False)):
    return bridge_step(spec, state_from_positions(positions, done), joint)


def test_contested_cell_blocks_both():
    spec = BridgeSpec(mirror_actions=False)
    res = _step(spec, ((2, 0), (4, 0)), (4, 3))  # right, left into (3,0)
    assert res.state.positions == ((2, 0), (4, 0))


def test_swap_blocked():
    spec = BridgeSpec(mirror_actions=False)
    res = _step(spec, ((2, 0), (3, 0)), (4, 3))
    assert res.state.positions == ((2, 0), (3, 0))


def test_following_into_vacated_cell_blocked():
    spec = BridgeSpec(mirror_actions=False)
    res = _step(spec, ((2, 0), (3, 0)), (4, 4))
    assert res.state.positions == ((2, 0), (4, 0))


def test_reward_is_distance_penalty():
    spec = BridgeSpec()
    res = _step(spec, ((2, 0), (5, 0)), (0, 0))
    np.testing.assert_allclose(res.rewards, [-0.04, -0.05])
    assert res.team_reward == pytest.approx(-0.09)


def test_done_agent_is_removed_and_ignored():
    spec = BridgeSpec()
    res = _step(spec, ((5, 0), (6, 0)), (4, 0), done=(False, True))
    assert res.state.done == (True, True)
    assert res.done
    res2 = _step(spec, ((4, 0), (1, 0)), (4, 2), done=(False, True))
    assert res2.rewards[1] == 0.0
    np.testing.assert_array_equal(res2.observations[0][4:], SENTINEL)


def test_malformed_action_rejected():
    with pytest.raises(ValueError):
        _step(BridgeSpec(), ((0, 0), (6, 0)), (0, 7))


def test_step_is_pure_and_deterministic():
    spec = BridgeSpec()
    state, _ = bridge_reset(spec)
    a = bridge_step(spec, state, (4, 4))
    b = bridge_step(spec, state, (4, 4))
    assert state.t == 0
    assert a.state == b.state
    np.testing.assert_array_equal(a.rewards, b.rewards)
    np.testing.assert_array_equal(a.observations, b.observations)


def _reachable_states(spec, limit=5000):
    start, _ = bridge_reset(spec)
    seen = {start.positions + start.done: start}
    frontier = [start]
    while frontier and len(seen) < limit:
        s = frontier.pop()
        if all(s.done):
            continue
        for joint in itertools.product(range(5), repeat=2):
            nxt = bridge_step(spec, state_from_positions(s.positions, s.done, 0), joint).state
            key = nxt.positions + nxt.done
            if key not in seen:
                seen[key] = nxt
                frontier.append(nxt)
    return list(seen.values())


def test_mirror_symmetry_over_reachable_states():
    spec = BridgeSpec()
    states = _reachable_states(spec)
    assert len(states) > 50
    for s in states:
        m = s.mirrored(spec.corridor_length)
        np.testing.assert_array_equal(bridge_observe(spec, s, 0), bridge_observe(spec, m, 1))


def test_mirrored_action_frame():
    np.testing.assert_array_equal(mirror_action([0, 1, 2, 3, 4]), [0, 1, 2, 4, 3])
    spec = BridgeSpec()
    # both agents press "right" in their own frame and walk toward each other
    res = _step(spec, ((0, 0), (6, 0)), (4, 4))
    assert res.state.positions == ((1, 0), (5, 0))


def test_occupancy_fuzz():
    spec = BridgeSpec()
    env = VecBridge(spec, 100)
    rng = np.random.default_rng(0)
    valid = spec.layout().valid_mask()
    for _ in range(1000):  # 10^5 env steps
        env.step(rng.integers(0, 5, size=(100, 2)))
        both = (env.done == 0).all(axis=1)
        same = (env.pos[:, 0] == env.pos[:, 1]).all(axis=1)
        assert not (both & same).any()
        assert valid[env.pos[..., 0], env.pos[..., 1]].all()
        assert (env.t <= spec.horizon).all()


def test_vec_bridge_matches_single_env():
    spec = BridgeSpec()
    rng = np.random.default_rng(5)
    env = VecBridge(spec, 1)
    state, _ = bridge_reset(spec)
    for _ in range(200):
        joint = rng.integers(0, 5, size=2)
        res = bridge_step(spec, state, joint)
        team, _, ended = env.step(joint[None])
        assert team[0] == pytest.approx(res.team_reward, abs=1e-15)
        if res.done:
            assert ended[0]
            state, obs = bridge_reset(spec)
        else:
            assert not ended[0]
            state = res.state
            np.testing.assert_array_equal(env.observations()[0], res.observations)


def test_corridor_oracle():
    assert optimal_return(corridor_layout(3, horizon=4)) == pytest.approx(-0.03)


def test_default_oracle_pinned():
    assert bridge_optimal_return(BridgeSpec()) == pytest.approx(V_STAR_DEFAULT, abs=1e-12)


def test_default_oracle_agrees_with_forward_search():
    lay = BridgeSpec().layout()
    ref = forward_optimal_return(set(lay.cells), lay.spawns, lay.goals, lay.horizon, lay.penalty)
    assert ref == pytest.approx(V_STAR_DEFAULT, abs=1e-12)


@pytest.mark.parametrize("length,horizon", [(5, 2), (5, 3), (6, 3)])
def test_oracle_equals_open_loop_search(length, horizon):
    lay = BridgeSpec(corridor_length=length, horizon=horizon).layout()
    assert optimal_return(lay) == pytest.approx(open_loop_search(lay), abs=1e-12)


def test_open_loop_search_on_corridor():
    assert open_loop_search(corridor_layout(4, horizon=5)) == pytest.approx(-0.06)


def test_optimal_plan_achieves_oracle():
    spec = BridgeSpec()
    plan = bridge_optimal_plan(spec)
    assert plan_return(spec, plan) == pytest.approx(V_STAR_DEFAULT, abs=1e-12)


def test_bridge_end_state():
    spec = BridgeSpec()
    s = bridge_end_state(spec)
    assert s.positions == ((2, 0), (4, 0))
    assert s.done == (False, False)
    m = s.mirrored(spec.corridor_length)
    assert m.positions == s.positions


def test_custom_layout_oracle():
    cells = frozenset({(0, 0), (1, 0), (2, 0), (1, 1)})
    lay = Layout(3, 2, cells, ((0, 0), (2, 0)), ((2, 0), (0, 0)), horizon=8, penalty=0.01)
    ref = forward_optimal_return(set(cells), lay.spawns, lay.goals, 8, 0.01)
    assert optimal_return(lay) == pytest.approx(ref, abs=1e-12)


def test_bridge_cells_oracle_matches_layout():
    assert bridge_cells(7) == set(BridgeSpec().layout().cells)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=50, max_size=50))
def test_full_length_plans_never_beat_oracle(plan):
    assert plan_return(BridgeSpec(), plan) <= V_STAR_DEFAULT + 1e-12
