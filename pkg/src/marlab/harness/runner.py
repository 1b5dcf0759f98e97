"""Run an experiment config seed by seed, streaming metrics to CSV.

Randomness: each seed ``s`` drives numpy's counter-based Philox generator
keyed by ``SeedSequence([s, stream])``; stream 0 feeds initialization and
training, stream 1 feeds evaluation sampling.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ..diffcore import NonFiniteError, adam
from ..envs.bridge import BridgeSpec, bridge_end_state
from ..envs.matrix import MatrixGameSpec, permutation_game, xor_game
from ..envs.oracle import bridge_optimal_return
from ..evalkit import entropy as ek
from ..evalkit.returns import eval_return, matrix_expected_return
from ..pg.bridge_models import BridgeCritic, make_actor
from ..pg.matrix_policies import make_matrix_policy
from ..pg.ppo import PPOConfig, bridge_episode_returns, state_policy_entropy, train_bridge_ppo
from ..pg.reinforce import ReinforceConfig, reinforce_update
from ..valdecomp.fitting import DivergenceError, fit_payoff
from ..valdecomp.localq import LocalQTable, SharedQNet, joint_q_table
from ..valdecomp.mixers import make_mixer
from ..valdecomp.qlearning import QLearnConfig, greedy_bridge_return, qlearn_bridge, qlearn_matrix
from .checkpoint import checkpoint_save
from .config import ExperimentConfig, serialize_config

OUTPUT_ENV = "MARLAB_OUTPUT_ROOT"
TRAIN_STREAM, EVAL_STREAM = 0, 1


def make_rng(seed: int, stream: int = TRAIN_STREAM) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), stream])))


def output_root(cfg: ExperimentConfig, override=None) -> Path:
    """Explicit override, then ``$MARLAB_OUTPUT_ROOT``, then the config's ``output_dir``, then ``./runs``."""
    for candidate in (override, os.environ.get(OUTPUT_ENV), cfg.output_dir):
        if candidate:
            return Path(candidate)
    return Path("runs")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class MetricStream:
    """One CSV file with a header; rows are flushed as they arrive and the step column must increase."""

    def __init__(self, path: Path, columns: list[str]):
        self.path, self.columns = path, list(columns)
        self.rows: list[tuple] = []
        self._fh = path.open("w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(self.columns)
        self._fh.flush()

    def write(self, *row) -> None:
        if len(row) != len(self.columns):
            raise ValueError(f"{self.path.name}: expected {len(self.columns)} values, got {len(row)}")
        if self.rows and not row[0] > self.rows[-1][0]:
            raise ValueError(f"{self.path.name}: step {row[0]} does not follow {self.rows[-1][0]}")
        self.rows.append(tuple(row))
        self._w.writerow([_fmt(v) for v in row])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def write_table(path: Path, columns, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


@dataclass
class RunRecord:
    experiment: str
    seed: int
    fingerprint: str
    run_dir: str
    status: str = "ok"
    error: str = ""
    files: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    checkpoint: str = ""
    duration_s: float = 0.0
    streams: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def rows(self, stream: str) -> list[tuple]:
        return self.streams[stream].rows


class _RunContext:
    def __init__(self, cfg: ExperimentConfig, seed: int, run_dir: Path, record: RunRecord):
        self.cfg, self.seed, self.dir, self.record = cfg, seed, run_dir, record
        self.rng = make_rng(seed, TRAIN_STREAM)
        self.eval_rng = make_rng(seed, EVAL_STREAM)
        self.extra: dict = {"seed": seed}

    def stream(self, name: str, columns) -> MetricStream:
        s = MetricStream(self.dir / f"{name}.csv", columns)
        self.record.streams[name] = s
        self.record.files.append(s.path.name)
        return s

    def table(self, name: str, columns, rows) -> None:
        write_table(self.dir / f"{name}.csv", columns, rows)
        self.record.files.append(f"{name}.csv")

    def save(self, modules, extra=None) -> None:
        path = checkpoint_save(modules, self.dir / "checkpoint.npz", self.cfg.fingerprint(),
                               self.cfg.representation or self.cfg.algorithm, extra)
        self.record.checkpoint = path.name
        self.record.files.append(path.name)


def make_game(cfg: ExperimentConfig) -> MatrixGameSpec:
    if cfg.env == "xor":
        return xor_game()
    if cfg.env == "permutation":
        return permutation_game(cfg.n_players)
    raise ValueError(f"env {cfg.env} is not a matrix game")


def make_bridge(cfg: ExperimentConfig) -> BridgeSpec:
    return BridgeSpec(corridor_length=cfg.corridor_length, horizon=cfg.horizon, penalty=cfg.penalty,
                      sum_agent_rewards=cfg.sum_agent_rewards, mirror_actions=cfg.mirror_actions)


def qlearn_config(cfg: ExperimentConfig) -> QLearnConfig:
    return QLearnConfig(
        steps=cfg.ql_steps, gamma=cfg.ql_gamma, target_interval=cfg.ql_target_interval,
        learning_rate=cfg.ql_lr, grad_norm_clip=cfg.ql_grad_norm, eps_start=cfg.ql_eps_start,
        eps_end=cfg.ql_eps_end, eps_decay_fraction=cfg.ql_eps_decay_fraction, batch_size=cfg.ql_batch_size,
        buffer_capacity=cfg.ql_buffer_capacity, record_every=cfg.ql_record_every, n_envs=cfg.ql_n_envs,
        warmup=cfg.ql_warmup,
    )


def ppo_config(cfg: ExperimentConfig) -> PPOConfig:
    return PPOConfig(
        iterations=cfg.ppo_iterations, n_envs=cfg.ppo_n_envs, rollout_length=cfg.ppo_rollout_length,
        gamma=cfg.ppo_gamma, gae_lambda=cfg.ppo_lambda, clip=cfg.ppo_clip, value_clip=cfg.ppo_value_clip,
        huber_delta=cfg.ppo_huber_delta, entropy_coef=cfg.ppo_entropy_coef, learning_rate=cfg.ppo_lr,
        grad_norm_clip=cfg.ppo_grad_norm, epochs=cfg.ppo_epochs, minibatches=cfg.ppo_minibatches,
        multi_step=cfg.multi_step, randomize_order=cfg.randomize_order,
    )


def build_models(cfg: ExperimentConfig, rng) -> dict:
    """Fresh, seeded models for ``cfg``, keyed as they are stored in checkpoints."""
    if cfg.regime in ("fit", "qlearn"):
        if cfg.env == "bridge":
            local = SharedQNet(6, 5, 2, rng)
            mixer = make_mixer(cfg.algorithm, 2, 5, 6, rng, cfg.mixer_embed)
        else:
            game = make_game(cfg)
            local = LocalQTable(game.n_agents, game.n_actions, rng)
            mixer = make_mixer(cfg.algorithm, game.n_agents, game.n_actions, 1, rng, cfg.mixer_embed)
        return {"local": local, "mixer": mixer}
    if cfg.regime == "reinforce":
        game = make_game(cfg)
        return {"policy": make_matrix_policy(cfg.representation, game.n_agents, game.n_actions)}
    rep = cfg.representation
    actor = make_actor(rep, rng, attention=cfg.attention)
    critic = BridgeCritic("shared" if rep == "auto_regressive" else rep, rng)
    return {"actor": actor, "critic": critic}


def _q_rows(q: np.ndarray):
    return [(*(int(i) + 1 for i in idx), float(q[idx])) for idx in np.ndindex(q.shape)]


def _run_fit(ctx: _RunContext):
    cfg, game = ctx.cfg, make_game(ctx.cfg)
    models = build_models(cfg, ctx.rng)
    local, mixer = models["local"], models["mixer"]
    errors = ctx.stream("fit_error", ["step", "error"])
    try:
        curve = fit_payoff(mixer, local, game.payoff, cfg.fit_steps, cfg.fit_lr, callback=errors.write)
    finally:
        errors.close()
    q = joint_q_table(mixer, local.table.data)
    n = game.n_agents
    ctx.table("q_tot", [f"a{i + 1}" for i in range(n)] + ["q_tot"], _q_rows(q))
    ctx.record.final = {"final_error": float(curve[-1]), "min_error": float(curve.min())}
    return models


def _off_diagonal_max(q: np.ndarray) -> float:
    return float(max(q[0, 1], q[1, 0])) if q.shape == (2, 2) else float(q.max())


def _run_qlearn(ctx: _RunContext):
    cfg = ctx.cfg
    models = build_models(cfg, ctx.rng)
    local, mixer = models["local"], models["mixer"]
    qcfg = qlearn_config(cfg)
    if cfg.env == "bridge":
        spec = make_bridge(cfg)
        s = ctx.stream("eval_return", ["step", "eval_return"])
        try:
            res = qlearn_bridge(mixer, local, spec, qcfg, ctx.rng, callback=s.write)
        finally:
            s.close()
        ret = greedy_bridge_return(local, spec)
        oracle = bridge_optimal_return(spec)
        ctx.record.final = {"eval_return": ret, "oracle": oracle, "gap": oracle - ret}
        return models
    game = make_game(cfg)
    s = ctx.stream("fit_error", ["step", "error"])
    try:
        res = qlearn_matrix(mixer, local, game, qcfg, ctx.rng, callback=s.write)
    finally:
        s.close()
    q = joint_q_table(mixer, local.table.data)
    ctx.table("q_tot", [f"a{i + 1}" for i in range(game.n_agents)] + ["q_tot"], _q_rows(q))
    ctx.record.final = {
        "final_error": float(res.metric[-1]),
        "min_error": float(res.metric.min()),
        "max_optimal_q_tot": _off_diagonal_max(q),
    }
    return models


def _run_reinforce(ctx: _RunContext):
    cfg, game = ctx.cfg, make_game(ctx.cfg)
    models = build_models(cfg, ctx.rng)
    policy = models["policy"]
    rcfg = ReinforceConfig(cfg.pg_updates, cfg.pg_lr, cfg.pg_batch_size, cfg.pg_entropy_coef,
                           cfg.multi_step, cfg.randomize_order)
    opt = adam(policy.parameters(), rcfg.learning_rate)
    returns = ctx.stream("returns", ["step", "batch_reward", "expected_return"])
    entropy = ctx.stream("entropy", ["step", "entropy_nats"])
    try:
        for step in range(1, rcfg.updates + 1):
            stats = reinforce_update(policy, opt, game, rcfg, ctx.rng)
            probs = policy.joint_probs()
            returns.write(step, stats.mean_reward, float((probs * game.payoff.array).sum()))
            entropy.write(step, ek.entropy_of(probs))
    finally:
        returns.close()
        entropy.close()
    hist = ek.joint_action_histogram(policy, game, cfg.histogram_episodes, ctx.eval_rng)
    ek.write_histogram_csv(hist, ctx.dir / "histogram.csv")
    ctx.record.files.append("histogram.csv")
    if hist.counts.ndim >= 2:
        ek.write_heatmap_csv(hist, ctx.dir / "heatmap.csv")
        ctx.record.files.append("heatmap.csv")
    ctx.record.final = {
        "expected_return": matrix_expected_return(policy, game),
        "entropy_nats": ek.trajectory_entropy(policy, game).value,
        "eval_return": eval_return(policy, game, cfg.eval_episodes, rng=ctx.eval_rng).mean,
        "occupied_cells": hist.occupied(),
        "optimal_cells_occupied": hist.occupied(game.payoff.array == game.payoff.array.max()),
        "dominant_cells": hist.dominant_cells(),
    }
    return models


def _run_ppo(ctx: _RunContext):
    cfg = ctx.cfg
    spec = make_bridge(cfg)
    models = build_models(cfg, ctx.rng)
    actor, critic = models["actor"], models["critic"]
    pcfg = ppo_config(cfg)
    end_state = bridge_end_state(spec)
    eval_eps = 1 if not actor.needs_order else cfg.eval_episodes
    s = ctx.stream("metrics", ["iteration", "env_steps", "train_return", "eval_return", "policy_entropy",
                               "end_state_entropy", "value_loss"])

    def log(stats, actor):
        ret = float(bridge_episode_returns(actor, spec, eval_eps, ctx.eval_rng,
                                           randomize_order=pcfg.randomize_order).mean())
        ent = state_policy_entropy(actor, spec, end_state, pcfg.randomize_order)
        s.write(stats.iteration, stats.env_steps, stats.train_return, ret, stats.policy_entropy, ent,
                stats.value_loss)

    try:
        _, _, norm = train_bridge_ppo(actor, critic, spec, pcfg, ctx.rng, callback=log)
    finally:
        s.close()
    rets = bridge_episode_returns(actor, spec, cfg.eval_episodes, ctx.eval_rng, randomize_order=pcfg.randomize_order)
    oracle = bridge_optimal_return(spec)
    ctx.record.final = {
        "eval_return": float(rets.mean()),
        "eval_return_std": float(rets.std()),
        "oracle": oracle,
        "gap": float(oracle - rets.mean()),
        "end_state_entropy": state_policy_entropy(actor, spec, end_state, pcfg.randomize_order),
    }
    ctx.extra["value_norm"] = norm.state_dict()
    return models


RUNNERS = {"fit": _run_fit, "qlearn": _run_qlearn, "reinforce": _run_reinforce, "ppo": _run_ppo}


def run_seed(cfg: ExperimentConfig, seed: int, root: Path) -> RunRecord:
    run_dir = root / cfg.experiment / f"seed_{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    record = RunRecord(cfg.experiment, seed, cfg.fingerprint(), str(run_dir))
    ctx = _RunContext(cfg, seed, run_dir, record)
    (run_dir / "config.cfg").write_text(serialize_config(cfg.replace(seeds=(seed,))))
    record.files.append("config.cfg")
    start = time.perf_counter()
    try:
        models = RUNNERS[cfg.regime](ctx)
        ctx.save(models, ctx.extra)
    except (NonFiniteError, DivergenceError, FloatingPointError) as err:
        record.status, record.error = "aborted", f"{type(err).__name__}: {err}"
    record.duration_s = time.perf_counter() - start
    _write_manifest(record, run_dir)
    return record


def _write_manifest(record: RunRecord, run_dir: Path) -> None:
    body = {f.name: getattr(record, f.name) for f in fields(record) if f.name != "streams"}
    body["generator"] = "numpy Philox keyed by SeedSequence([seed, stream]); stream 0 train, 1 eval"
    body["files"] = sorted(set(record.files))
    (run_dir / "manifest.json").write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig, seeds=None, out_root=None) -> list[RunRecord]:
    """One ``RunRecord`` per seed; an aborted seed does not stop the others."""
    root = output_root(cfg, out_root)
    records = [run_seed(cfg, int(s), root) for s in (seeds if seeds is not None else cfg.seeds)]
    index = {
        "experiment": cfg.experiment,
        "fingerprint": cfg.fingerprint(),
        "runs": [{"seed": r.seed, "dir": f"seed_{r.seed}", "status": r.status} for r in records],
    }
    (root / cfg.experiment / "manifest.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return records
