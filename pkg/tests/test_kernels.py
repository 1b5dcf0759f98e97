import os
import subprocess
import sys

import numpy as np
import pytest

from marlab import _kernels
from marlab._kernels import _fallback
from marlab.envs import BridgeSpec

from oracles import bridge_cells, gae_by_sums, reference_step

compiled = _kernels.compiled_module()
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")


def _random_batch(rng, n_envs=64, length=7):
    spec = BridgeSpec(corridor_length=length)
    lay = spec.layout()
    cells = lay.cell_list()
    pos = np.empty((n_envs, 2, 2), dtype=np.int64)
    for e in range(n_envs):
        a, b = rng.choice(len(cells), size=2, replace=False)
        pos[e] = [cells[a], cells[b]]
    done = (rng.random((n_envs, 2)) < 0.15).astype(np.uint8)
    actions = rng.integers(0, 5, size=(n_envs, 2))
    return lay, pos, done, actions


@needs_compiled
def test_step_parity_between_backends():
    rng = np.random.default_rng(0)
    for _ in range(50):
        lay, pos, done, actions = _random_batch(rng)
        p1, d1 = pos.copy(), done.copy()
        p2, d2 = pos.copy(), done.copy()
        r1 = _kernels.bridge_step_batch(lay.valid_mask(), lay.goals, p1, d1, actions, 0.01, impl=_fallback)
        r2 = _kernels.bridge_step_batch(lay.valid_mask(), lay.goals, p2, d2, actions, 0.01, impl=compiled)
        np.testing.assert_array_equal(p1, p2)
        np.testing.assert_array_equal(d1, d2)
        np.testing.assert_array_equal(r1, r2)


@needs_compiled
def test_gae_parity_between_backends():
    rng = np.random.default_rng(1)
    r = rng.normal(size=(40, 6))
    v = rng.normal(size=(41, 6))
    d = (rng.random((40, 6)) < 0.1).astype(np.uint8)
    a1 = _kernels.gae(r, v, d, 0.99, 0.95, impl=_fallback)
    a2 = _kernels.gae(r, v, d, 0.99, 0.95, impl=compiled)
    np.testing.assert_array_equal(a1, a2)


@pytest.mark.parametrize("impl", [_fallback, compiled] if compiled else [_fallback])
def test_step_matches_set_based_reference(impl):
    rng = np.random.default_rng(2)
    cells = bridge_cells(7)
    lay = BridgeSpec().layout()
    for _ in range(30):
        _, pos, done, actions = _random_batch(rng, n_envs=32)
        p, d = pos.copy(), done.copy()
        rewards = _kernels.bridge_step_batch(lay.valid_mask(), lay.goals, p, d, actions, 0.01, impl=impl)
        for e in range(len(pos)):
            want_p, want_d, want_r = reference_step(
                cells, lay.goals, [tuple(x) for x in pos[e]], [bool(x) for x in done[e]], actions[e], 0.01
            )
            for i in range(2):
                if not done[e, i]:
                    assert tuple(p[e, i]) == want_p[i]
            assert [bool(x) for x in d[e]] == want_d
            np.testing.assert_allclose(rewards[e], want_r, atol=1e-15)


@pytest.mark.parametrize("impl", [_fallback, compiled] if compiled else [_fallback])
def test_gae_matches_explicit_sums(impl):
    rng = np.random.default_rng(3)
    r = rng.normal(size=(25, 3))
    v = rng.normal(size=(26, 3))
    d = (rng.random((25, 3)) < 0.2).astype(np.uint8)
    adv = _kernels.gae(r, v, d, 0.97, 0.9, impl=impl)
    for e in range(3):
        np.testing.assert_allclose(adv[:, e], gae_by_sums(r[:, e], v[:, e], d[:, e], 0.97, 0.9), atol=1e-12)


def test_bad_action_rejected():
    lay = BridgeSpec().layout()
    pos = np.array([[[0, 0], [6, 0]]])
    with pytest.raises(ValueError):
        _kernels.bridge_step_batch(lay.valid_mask(), lay.goals, pos, np.zeros((1, 2), np.uint8),
                                   np.array([[5, 0]]), 0.01, impl=_fallback)


def test_pure_python_switch():
    env = dict(os.environ, MARLAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from marlab import _kernels; print(_kernels.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"
