"""Command-line entry point: one subcommand per experiment pipeline."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..envs.bridge import BridgeSpec, bridge_end_state
from ..envs.oracle import bridge_optimal_return
from ..evalkit import entropy as ek
from ..evalkit.returns import eval_return, matrix_expected_return
from ..pg.ppo import bridge_episode_returns, state_policy_entropy
from ..valdecomp.localq import joint_q_table
from ..valdecomp.qlearning import greedy_bridge_return
from .checkpoint import CheckpointError, checkpoint_load
from .config import PRESETS, ConfigError, ExperimentConfig, parse_config, preset, serialize_config
from .runner import build_models, make_bridge, make_game, make_rng, run_experiment

BRIDGE_PRESETS = {"default": BridgeSpec()}


class UsageError(Exception):
    pass


def _seeds(text: str | None):
    if text is None:
        return None
    if "," in text:
        return tuple(int(v) for v in text.split(",") if v.strip())
    n = int(text)
    if n < 1:
        raise UsageError("--seeds must be a positive count or a comma-separated list")
    return tuple(range(n))


def _load_config(args, default_preset: str) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = parse_config(Path(args.config).read_text())
    else:
        cfg = preset(args.preset or default_preset)
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if overrides:
        text = serialize_config(cfg)
        cfg = parse_config(_apply_overrides(text, overrides))
    seeds = _seeds(getattr(args, "seeds", None))
    if seeds is not None:
        cfg = cfg.replace(seeds=seeds)
    return cfg


def _apply_overrides(text: str, overrides: dict) -> str:
    out = []
    for line in text.splitlines():
        key = line.split("=", 1)[0].strip() if "=" in line else None
        if key in overrides:
            line = f"{key} = {overrides.pop(key)}"
        out.append(line)
    if overrides:
        raise UsageError(f"unknown config key(s): {', '.join(sorted(overrides))}")
    return "\n".join(out) + "\n"


def _report(records) -> int:
    failed = 0
    for r in records:
        summary = " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.final.items())
        print(f"{r.experiment} seed={r.seed} status={r.status} {summary} dir={r.run_dir}")
        if not r.ok:
            print(f"  {r.error}", file=sys.stderr)
            failed += 1
    return 1 if failed else 0


def _train(args, default_preset: str, **fixed) -> int:
    cfg = _load_config(args, default_preset)
    if fixed:
        cfg = cfg.replace(**fixed)
    return _report(run_experiment(cfg, out_root=args.out))


def cmd_fit_xor(args):
    return _train(args, f"xor_fit_{args.mixer}")


def cmd_qlearn_xor(args):
    return _train(args, f"xor_qlearn_{args.mixer}")


def cmd_train_matrix(args):
    return _train(args, "xor_pg_ind")


def cmd_train_bridge(args):
    return _train(args, "bridge_pg_id")


def cmd_qlearn_bridge(args):
    return _train(args, f"bridge_{args.mixer}")


def cmd_list_presets(args):
    for name, cfg in PRESETS.items():
        print(f"{name:26s} {cfg.algorithm:7s} {cfg.regime:9s} {cfg.env:12s} seeds={len(cfg.seeds)}")
    return 0


def cmd_oracle_bridge(args):
    spec = BRIDGE_PRESETS[args.preset]
    changes = {k: v for k, v in (("corridor_length", args.corridor_length), ("horizon", args.horizon)) if v}
    if changes:
        spec = BridgeSpec(**{**spec.__dict__, **changes, "waiting_columns": None})
    print(repr(bridge_optimal_return(spec)))
    return 0


def _run_dir_config(run: Path) -> ExperimentConfig:
    path = run / "config.cfg"
    if not path.exists():
        raise UsageError(f"{run} is not a run directory (no config.cfg)")
    return parse_config(path.read_text())


def cmd_eval(args):
    run = Path(args.run)
    cfg = _run_dir_config(run)
    models = build_models(cfg, make_rng(0))
    checkpoint_load(models, run / "checkpoint.npz", cfg.fingerprint(), cfg.representation or cfg.algorithm)
    rng = make_rng(args.seed, 1)
    out = {}
    if cfg.regime in ("fit", "qlearn") and cfg.env != "bridge":
        game = make_game(cfg)
        q = joint_q_table(models["mixer"], models["local"].table.data)
        out["fit_error"] = float(((q - game.payoff.array) ** 2).sum())
    elif cfg.regime == "qlearn":
        spec = make_bridge(cfg)
        out["eval_return"] = greedy_bridge_return(models["local"], spec)
        out["oracle"] = bridge_optimal_return(spec)
    elif cfg.regime == "reinforce":
        game = make_game(cfg)
        pol = models["policy"]
        out["expected_return"] = matrix_expected_return(pol, game)
        out["eval_return"] = eval_return(pol, game, args.episodes, rng=rng).mean
        out["entropy_nats"] = ek.trajectory_entropy(pol, game).value
    else:
        spec = make_bridge(cfg)
        actor = models["actor"]
        rets = bridge_episode_returns(actor, spec, args.episodes, rng, randomize_order=cfg.randomize_order)
        out["eval_return"] = float(rets.mean())
        out["eval_return_std"] = float(rets.std())
        out["oracle"] = bridge_optimal_return(spec)
        out["end_state_entropy"] = state_policy_entropy(actor, spec, bridge_end_state(spec), cfg.randomize_order)
    print(json.dumps(out, sort_keys=True))
    return 0


def cmd_export_heatmap(args):
    run = Path(args.run)
    src = run / "histogram.csv"
    if not src.exists():
        raise UsageError(f"{run} has no histogram.csv; train a matrix-game policy first")
    hist = ek.read_histogram_csv(src)
    dest = Path(args.output) if args.output else run / "heatmap.csv"
    ek.write_heatmap_csv(hist, dest)
    rows, cols = hist.layout_2d().shape
    print(f"wrote {rows}x{cols} heatmap to {dest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def training(name, func, help_text, mixer=False):
        p = sub.add_parser(name, help=help_text)
        if mixer:
            p.add_argument("--mixer", choices=("vdn", "qmix", "qplex") if "xor" in name else ("qmix", "qplex"),
                           default="qmix" if "bridge" in name else "vdn")
        p.add_argument("--preset", choices=sorted(PRESETS), help="start from a named preset")
        p.add_argument("--config", help="config file in key = value format")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--seeds", help="seed count N (seeds 0..N-1) or a comma-separated list")
        p.add_argument("--out", help="output root (default: $MARLAB_OUTPUT_ROOT or ./runs)")
        p.set_defaults(func=func)
        return p

    training("fit-xor", cmd_fit_xor, "regress a mixer onto the XOR payoff", mixer=True)
    training("qlearn-xor", cmd_qlearn_xor, "epsilon-greedy Q-learning on XOR", mixer=True)
    training("train-matrix", cmd_train_matrix, "REINFORCE on a matrix game")
    training("train-bridge", cmd_train_bridge, "PPO on Bridge")
    training("qlearn-bridge", cmd_qlearn_bridge, "value-decomposition Q-learning on Bridge", mixer=True)

    p = sub.add_parser("eval", help="evaluate a finished run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--episodes", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle-bridge", help="print the exact optimal Bridge return")
    p.add_argument("--preset", choices=sorted(BRIDGE_PRESETS), default="default")
    p.add_argument("--corridor-length", type=int)
    p.add_argument("--horizon", type=int)
    p.set_defaults(func=cmd_oracle_bridge)

    p = sub.add_parser("export-heatmap", help="2-D joint-action heatmap CSV from a run's histogram")
    p.add_argument("--run", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_export_heatmap)

    p = sub.add_parser("list-presets", help="list experiment presets")
    p.set_defaults(func=cmd_list_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError, KeyError, CheckpointError, FileNotFoundError) as err:
        msg = err.args[0] if isinstance(err, KeyError) and err.args else err
        print(f"marlab {args.command}: {msg}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
