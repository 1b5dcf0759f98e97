import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import marlab.valdecomp.qlearning as qlearning
from marlab.diffcore import Tensor, no_grad, ops
from marlab.envs import constant_payoff, xor_game, xor_payoff
from marlab.valdecomp import (
    QMIX,
    QPLEX,
    VDN,
    DivergenceError,
    LocalQTable,
    QLearnConfig,
    ReplayBuffer,
    SharedQNet,
    advantage_tot,
    epsilon_greedy,
    fit_payoff,
    igm_greedy,
    make_mixer,
    payoff_fit_error,
    q_tot,
    qlearn_matrix,
)

from oracles import additive_least_squares
from soundness import igm_violations

# least-squares floor of an additive model on XOR, from the independent lstsq oracle
VDN_XOR_FLOOR = 1.0


def test_vdn_sum():
    assert q_tot(VDN(2, 2), [0.3, 0.4]) == pytest.approx(0.7)


def test_qmix_zero_locals_leave_bias_path():
    rng = np.random.default_rng(0)
    m = QMIX(2, 2, 3, rng, embed=8)
    s = rng.normal(size=3)
    with no_grad():
        state_t = Tensor(s[None])
        hidden = ops.elu(m.hyper_b1(state_t)).data[0]
        w2 = np.abs(m.hyper_w2(state_t).data[0])
        v = m.hyper_v2(ops.relu(m.hyper_v1(state_t))).data[0, 0]
    assert q_tot(m, [0.0, 0.0], state=s) == pytest.approx(float(hidden @ w2 + v), abs=1e-12)


def test_qplex_at_local_argmax_is_value_term():
    rng = np.random.default_rng(1)
    m = QPLEX(2, 3, 1, rng)
    table = rng.normal(size=(2, 3))
    joint = np.array(igm_greedy(table))
    chosen = table[np.arange(2), joint]
    with no_grad():
        w, b = m.transform(Tensor(np.ones((1, 1))))
    expect = float((w.data[0] * table.max(axis=1) + b.data[0]).sum())
    assert q_tot(m, chosen, q_all=table, joint=joint) == pytest.approx(expect, abs=1e-12)


def test_qplex_requires_tables():
    m = QPLEX(2, 2, 1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        q_tot(m, [0.0, 0.0])


def test_igm_greedy_examples():
    assert igm_greedy([[0.9, 0.1], [0.2, 0.8]]) == (0, 1)  # (1, 2) in 1-based notation
    assert igm_greedy([[0.5, 0.5]]) == (0,)


def test_advantage_tot_examples():
    q = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert advantage_tot(q, (0, 0)) == -1.0
    assert advantage_tot(q, (0, 1)) == 0.0
    assert all(advantage_tot(np.full((2, 2), 3.0), j) == 0.0 for j in [(0, 0), (0, 1), (1, 0), (1, 1)])


@settings(max_examples=40)
@given(st.lists(st.floats(-5, 5), min_size=9, max_size=9))
def test_advantage_tot_never_positive(values):
    q = np.array(values).reshape(3, 3)
    assert all(advantage_tot(q, (a, b)) <= 0.0 for a in range(3) for b in range(3))


def test_mixer_positivity_invariants():
    rng = np.random.default_rng(2)
    s = rng.normal(size=(50, 4))
    qmix = QMIX(2, 3, 4, rng)
    with no_grad():
        w1, w2 = qmix.mixing_weights(Tensor(s))
    assert (w1.data >= 0).all() and (w2.data >= 0).all()
    qplex = QPLEX(2, 3, 4, rng)
    joint = rng.integers(0, 3, size=(50, 2))
    with no_grad():
        w, _ = qplex.transform(Tensor(s))
        lam = qplex.importance(Tensor(s), joint)
    assert (w.data > 0).all() and (lam.data > 0).all()


def test_igm_holds_on_random_mixers():
    assert igm_violations(100) == []


def test_fit_vdn_xor_converges_to_floor():
    rng = np.random.default_rng(0)
    curve = fit_payoff(VDN(2, 2), LocalQTable(2, 2, rng), xor_payoff(), 2000)
    assert curve[-1] == pytest.approx(VDN_XOR_FLOOR, abs=1e-6)
    assert len(curve) == 2001


def test_vdn_floor_matches_least_squares_oracle():
    assert additive_least_squares(xor_payoff().array) == pytest.approx(VDN_XOR_FLOOR, abs=1e-12)


@settings(max_examples=60)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(-3, 3), st.floats(-3, 3))
def test_no_vdn_setting_beats_floor(table, w1, w2):
    mixer = VDN(2, 2)
    mixer.weight.data = np.array([w1, w2])
    local = LocalQTable(2, 2, np.random.default_rng(0))
    local.table.data = np.array(table).reshape(2, 2)
    assert payoff_fit_error(mixer, local, xor_payoff()) >= VDN_XOR_FLOOR - 1e-6


@pytest.mark.parametrize("kind", ["vdn", "qmix", "qplex"])
def test_constant_payoff_fits_exactly(kind):
    rng = np.random.default_rng(0)
    curve = fit_payoff(make_mixer(kind, 2, 2, 1, rng, embed=8), LocalQTable(2, 2, rng), constant_payoff(1.0), 2000)
    assert curve[-1] < 1e-6


def test_fit_error_examples():
    local = LocalQTable(2, 2, np.random.default_rng(0))
    mixer = VDN(2, 2)
    local.table.data = np.full((2, 2), 0.25)
    assert payoff_fit_error(mixer, local, xor_payoff()) == pytest.approx(1.0)
    local.table.data = np.zeros((2, 2))
    assert payoff_fit_error(mixer, local, xor_payoff()) == pytest.approx(2.0)
    local.table.data = np.array([[0.0, 1.0], [0.0, 1.0]])
    mixer.weight.data = np.array([1.0, 0.0])
    from marlab.envs import PayoffTensor

    assert payoff_fit_error(mixer, local, PayoffTensor(np.array([[0.0, 0.0], [1.0, 1.0]]))) == 0.0


def test_divergence_aborts():
    rng = np.random.default_rng(0)
    with pytest.raises(DivergenceError, match="diverged"):
        fit_payoff(VDN(2, 2), LocalQTable(2, 2, rng), xor_payoff(), 200, lr=5.0)


def test_replay_fifo_eviction():
    buf = ReplayBuffer(3)
    for i in range(5):
        buf.add(x=np.array([i]))
    assert len(buf) == 3
    assert sorted(buf.fields["x"].tolist()) == [2, 3, 4]


def test_replay_never_samples_unstored():
    buf = ReplayBuffer(100)
    buf.add(x=np.array([7, 8, 9]))
    got = buf.sample(1000, np.random.default_rng(0))["x"]
    assert set(got.tolist()) <= {7, 8, 9}
    with pytest.raises(ValueError):
        ReplayBuffer(5).sample(1, np.random.default_rng(0))


def test_replay_sampling_is_uniform():
    buf = ReplayBuffer(50)
    k = 20
    buf.add(x=np.arange(k))
    draws = 10**5
    got = np.concatenate([buf.sample(1000, np.random.default_rng(i))["x"] for i in range(draws // 1000)])
    counts = np.bincount(got, minlength=k)
    p = 1 / k
    sigma = np.sqrt(draws * p * (1 - p))
    assert (np.abs(counts - draws * p) <= 3 * sigma).all()


def test_epsilon_schedule():
    cfg = QLearnConfig(steps=1000)
    assert cfg.epsilon(0) == 1.0
    assert cfg.epsilon(250) == pytest.approx(0.525)
    assert cfg.epsilon(500) == pytest.approx(0.05)
    assert cfg.epsilon(999) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        QLearnConfig(target_interval=0)
    with pytest.raises(ValueError):
        QLearnConfig(eps_end=1.5)


def test_epsilon_greedy_extremes():
    rng = np.random.default_rng(0)
    q = np.array([[0.0, 1.0, 0.5]] * 200)
    assert (epsilon_greedy(q, 0.0, rng) == 1).all()
    explored = epsilon_greedy(q, 1.0, rng)
    assert set(explored.tolist()) == {0, 1, 2}


def test_target_syncs_only_on_interval(monkeypatch):
    steps_seen = []
    sync_steps = []

    class Recording(qlearning.TargetCopy):
        def sync(self, local, mixer):
            sync_steps.append(len(steps_seen) + 1)
            super().sync(local, mixer)

    monkeypatch.setattr(qlearning, "TargetCopy", Recording)
    rng = np.random.default_rng(0)
    cfg = QLearnConfig(steps=300, record_every=1)
    qlearn_matrix(VDN(2, 2), LocalQTable(2, 2, rng), xor_game(), cfg, rng, callback=lambda s, e: steps_seen.append(s))
    assert sync_steps == [50, 100, 150, 200, 250, 300]


def test_qlearn_matrix_records_curve():
    rng = np.random.default_rng(0)
    cfg = QLearnConfig(steps=400, record_every=100)
    res = qlearn_matrix(VDN(2, 2), LocalQTable(2, 2, rng), xor_game(), cfg, rng)
    assert res.steps.tolist() == [100, 200, 300, 400]
    assert (res.metric >= VDN_XOR_FLOOR - 1e-6).all()


def test_shared_q_net_shapes_and_id():
    rng = np.random.default_rng(0)
    obs = np.ones((3, 2, 6))
    plain = SharedQNet(6, 5, 2, rng)
    out = plain(obs).data
    assert out.shape == (3, 2, 5)
    np.testing.assert_array_equal(out[:, 0], out[:, 1])
    with_id = SharedQNet(6, 5, 2, rng, id_conditioned=True)
    out = with_id(obs).data
    assert not np.allclose(out[:, 0], out[:, 1])
