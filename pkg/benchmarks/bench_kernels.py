"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py --envs 32 --repeats 20
"""

import argparse
import time

import numpy as np

from marlab import _kernels
from marlab._kernels import _fallback
from marlab.envs import BridgeSpec, VecBridge


def _best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_step(impl, n_envs: int, steps: int, repeats: int, seed: int) -> float:
    spec = BridgeSpec()
    env = VecBridge(spec, n_envs)
    rng = np.random.default_rng(seed)
    actions = rng.integers(0, 5, size=(steps, n_envs, 2))
    valid, goals = env._valid, env._goals
    pos0, done0 = env.pos.copy(), env.done.astype(np.uint8)

    def run():
        pos, done = pos0.copy(), done0.copy()
        for t in range(steps):
            _kernels.bridge_step_batch(valid, goals, pos, done, actions[t], spec.penalty, impl=impl)

    return _best_of(run, repeats)


def bench_gae(impl, n_envs: int, steps: int, repeats: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    rewards = rng.normal(size=(steps, n_envs))
    values = rng.normal(size=(steps + 1, n_envs))
    dones = (rng.uniform(size=(steps, n_envs)) < 0.02).astype(np.uint8)
    return _best_of(lambda: _kernels.gae(rewards, values, dones, 0.99, 0.95, impl=impl), repeats)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--envs", type=int, default=32)
    parser.add_argument("--steps", type=int, default=100)
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    compiled = _kernels.compiled_module()
    impls = {"python": _fallback}
    if compiled is None:
        print("compiled kernels not built; timing the fallback only")
    else:
        impls["cython"] = compiled

    print(f"{'kernel':<12}{'backend':<10}{'best (ms)':>12}{'speedup':>10}")
    for kernel, bench in (("bridge_step", bench_step), ("gae", bench_gae)):
        times = {name: bench(impl, args.envs, args.steps, args.repeats, args.seed) for name, impl in impls.items()}
        for name, t in times.items():
            speedup = times["python"] / t
            print(f"{kernel:<12}{name:<10}{1e3 * t:>12.3f}{speedup:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
