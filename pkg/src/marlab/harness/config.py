"""Experiment configuration: a typed record, a line-based text format, and presets.

The text format is ``key = value`` lines grouped under ``[section]`` headers.
Lines before the first header belong to the top section. ``#`` starts a
comment. Tuples are comma separated. An ``experiment = <preset>`` line seeds
every default from that preset before the remaining keys are applied.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields

VD_ALGORITHMS = ("vdn", "qmix", "qplex")
PG_ALGORITHMS = ("pg_sh", "pg_id", "pg_ind", "pg_ar")
ALGORITHMS = VD_ALGORITHMS + PG_ALGORITHMS
REGIMES = ("fit", "qlearn", "reinforce", "ppo")
ENVS = ("xor", "permutation", "bridge")

REPRESENTATION = {
    "pg_sh": "shared",
    "pg_id": "id_conditioned",
    "pg_ind": "individual",
    "pg_ar": "auto_regressive",
}

# fields that label a run without changing what it computes
NON_SEMANTIC = ("experiment", "seeds", "output_dir")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _f(section: str, default, **kw):
    return field(default=default, metadata={"section": section}, **kw)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = _f("", "custom")
    algorithm: str = _f("", "vdn")
    regime: str = _f("", "fit")
    seeds: tuple = _f("", (0,))
    output_dir: str = _f("", "")

    env: str = _f("env", "xor")
    n_players: int = _f("env", 4)
    corridor_length: int = _f("env", 7)
    horizon: int = _f("env", 50)
    penalty: float = _f("env", 0.01)
    sum_agent_rewards: bool = _f("env", True)
    mirror_actions: bool = _f("env", True)

    multi_step: bool = _f("algo", True)
    randomize_order: bool = _f("algo", True)
    attention: bool = _f("algo", True)
    mixer_embed: int = _f("algo", 64)

    fit_steps: int = _f("fit", 10_000)
    fit_lr: float = _f("fit", 0.1)

    ql_steps: int = _f("qlearn", 10_000)
    ql_gamma: float = _f("qlearn", 0.99)
    ql_lr: float = _f("qlearn", 5e-4)
    ql_grad_norm: float = _f("qlearn", 10.0)
    ql_target_interval: int = _f("qlearn", 50)
    ql_eps_start: float = _f("qlearn", 1.0)
    ql_eps_end: float = _f("qlearn", 0.05)
    ql_eps_decay_fraction: float = _f("qlearn", 0.5)
    ql_batch_size: int = _f("qlearn", 32)
    ql_buffer_capacity: int = _f("qlearn", 10_000)
    ql_record_every: int = _f("qlearn", 100)
    ql_n_envs: int = _f("qlearn", 8)
    ql_warmup: int = _f("qlearn", 32)

    pg_updates: int = _f("reinforce", 2000)
    pg_lr: float = _f("reinforce", 0.05)
    pg_batch_size: int = _f("reinforce", 128)
    pg_entropy_coef: float = _f("reinforce", 0.01)

    ppo_iterations: int = _f("ppo", 100)
    ppo_n_envs: int = _f("ppo", 32)
    ppo_rollout_length: int = _f("ppo", 100)
    ppo_gamma: float = _f("ppo", 0.99)
    ppo_lambda: float = _f("ppo", 0.95)
    ppo_clip: float = _f("ppo", 0.2)
    ppo_value_clip: float = _f("ppo", 0.2)
    ppo_huber_delta: float = _f("ppo", 10.0)
    ppo_entropy_coef: float = _f("ppo", 0.01)
    ppo_lr: float = _f("ppo", 5e-4)
    ppo_grad_norm: float = _f("ppo", 10.0)
    ppo_epochs: int = _f("ppo", 5)
    ppo_minibatches: int = _f("ppo", 1)

    eval_episodes: int = _f("eval", 32)
    histogram_episodes: int = _f("eval", 1000)

    def __post_init__(self):
        problems = compatibility_problems(self)
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def representation(self) -> str | None:
        return REPRESENTATION.get(self.algorithm)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def semantic_dict(self) -> dict:
        return {k: v for k, v in config_dict(self).items() if k not in NON_SEMANTIC}

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON of every semantically meaningful field."""
        blob = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def compatibility_problems(cfg: ExperimentConfig) -> list[str]:
    out = []
    if cfg.algorithm not in ALGORITHMS:
        out.append(f"unknown algorithm {cfg.algorithm!r}; expected one of {', '.join(ALGORITHMS)}")
    if cfg.regime not in REGIMES:
        out.append(f"unknown regime {cfg.regime!r}; expected one of {', '.join(REGIMES)}")
    if cfg.env not in ENVS:
        out.append(f"unknown env {cfg.env!r}; expected one of {', '.join(ENVS)}")
    if out:
        return out
    if cfg.regime in ("fit", "qlearn") and cfg.algorithm not in VD_ALGORITHMS:
        out.append(f"algorithm {cfg.algorithm} cannot run regime {cfg.regime}")
    if cfg.regime in ("reinforce", "ppo") and cfg.algorithm not in PG_ALGORITHMS:
        out.append(f"algorithm {cfg.algorithm} cannot run regime {cfg.regime}")
    if cfg.regime in ("fit", "reinforce") and cfg.env == "bridge":
        out.append(f"regime {cfg.regime} needs a matrix game, not bridge")
    if cfg.regime == "ppo" and cfg.env != "bridge":
        out.append("regime ppo runs on bridge only")
    if not cfg.attention and cfg.algorithm != "pg_ar":
        out.append("attention = false applies to pg_ar only")
    if not cfg.seeds:
        out.append("seeds must list at least one seed")
    if cfg.env == "permutation" and cfg.n_players < 2:
        out.append("n_players must be >= 2")
    return out


def _fields() -> dict:
    return {f.name: f for f in fields(ExperimentConfig)}


def config_dict(cfg: ExperimentConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def _type_name(f) -> str:
    return f.type if isinstance(f.type, str) else f.type.__name__


def _coerce(f, raw: str, line: int | None):
    t = _type_name(f)
    raw = raw.strip()
    try:
        if t == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if t == "int":
            return int(raw)
        if t == "float":
            return float(raw)
        if t == "tuple":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        return raw
    except ValueError:
        raise ConfigError(f"{f.name} expects {t}, got {raw!r}", line) from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str) -> ExperimentConfig:
    """Parse the ``key = value`` format; unknown keys and bad values raise ``ConfigError`` naming the line."""
    known = _fields()
    section = ""
    values: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise ConfigError(f"malformed section header {body!r}", lineno)
            section = body[1:-1].strip()
            if section not in {f.metadata["section"] for f in known.values()} or not section:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in known:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if known[key].metadata["section"] != section:
            want = known[key].metadata["section"]
            where = f"[{want}]" if want else "the top section"
            raise ConfigError(f"key {key!r} belongs in {where}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {values[key][1]})", lineno)
        values[key] = (raw, lineno)

    settings = config_dict(_default_config())
    if "experiment" in values:
        name, lineno = values["experiment"]
        if name in PRESETS:
            settings = config_dict(PRESETS[name])
        settings["experiment"] = name
    for key, (raw, lineno) in values.items():
        settings[key] = _coerce(known[key], raw, lineno)
    try:
        return ExperimentConfig(**settings)
    except ConfigError as err:
        line = None
        for key in ("algorithm", "regime", "env", "attention"):
            if key in values:
                line = values[key][1]
                break
        raise ConfigError(str(err), line) from None


def serialize_config(cfg: ExperimentConfig) -> str:
    """Text form that ``parse_config`` reads back to an equal config."""
    by_section: dict[str, list[str]] = {}
    for f in fields(cfg):
        by_section.setdefault(f.metadata["section"], []).append(f"{f.name} = {_format(getattr(cfg, f.name))}")
    out = list(by_section.pop(""))
    for section, lines in by_section.items():
        out += ["", f"[{section}]", *lines]
    return "\n".join(out) + "\n"


def _default_config() -> ExperimentConfig:
    return ExperimentConfig()


def _preset(name: str, **kw) -> ExperimentConfig:
    return ExperimentConfig(experiment=name, **kw)


SIX = (0, 1, 2, 3, 4, 5)
THREE = (0, 1, 2)

PRESETS: dict[str, ExperimentConfig] = {}
for _m in VD_ALGORITHMS:
    # plain SGD at lr 0.1 diverges with wider QMIX mixing layers
    PRESETS[f"xor_fit_{_m}"] = _preset(f"xor_fit_{_m}", algorithm=_m, regime="fit", env="xor",
                                      seeds=SIX, mixer_embed=8)
    PRESETS[f"xor_qlearn_{_m}"] = _preset(f"xor_qlearn_{_m}", algorithm=_m, regime="qlearn", env="xor",
                                         seeds=SIX, mixer_embed=8)
PRESETS["xor_pg_sh"] = _preset("xor_pg_sh", algorithm="pg_sh", regime="reinforce", env="xor", seeds=SIX)
PRESETS["xor_pg_ind"] = _preset("xor_pg_ind", algorithm="pg_ind", regime="reinforce", env="xor", seeds=SIX,
                                pg_updates=5000)
PRESETS["perm4_pg_ind"] = _preset("perm4_pg_ind", algorithm="pg_ind", regime="reinforce", env="permutation",
                                  n_players=4, seeds=THREE, pg_updates=3000)
PRESETS["perm4_pg_ar"] = _preset("perm4_pg_ar", algorithm="pg_ar", regime="reinforce", env="permutation",
                                 n_players=4, seeds=THREE, pg_updates=6000, pg_entropy_coef=0.05)
for _m in ("qmix", "qplex"):
    PRESETS[f"bridge_{_m}"] = _preset(f"bridge_{_m}", algorithm=_m, regime="qlearn", env="bridge", seeds=THREE,
                                     ql_steps=100_000, ql_record_every=2000)
for _alg, _its in (("pg_sh", 100), ("pg_id", 100), ("pg_ind", 150)):
    PRESETS[f"bridge_{_alg}"] = _preset(f"bridge_{_alg}", algorithm=_alg, regime="ppo", env="bridge",
                                       seeds=THREE, ppo_iterations=_its)
_ablate = dict(algorithm="pg_ar", regime="ppo", env="bridge", seeds=THREE, ppo_iterations=60,
               ppo_entropy_coef=0.05)
PRESETS["bridge_pg_ar"] = _preset("bridge_pg_ar", **_ablate)
PRESETS["bridge_ablation_no_mo"] = _preset("bridge_ablation_no_mo", multi_step=False, **_ablate)
PRESETS["bridge_ablation_no_ro"] = _preset("bridge_ablation_no_ro", randomize_order=False, **_ablate)
PRESETS["bridge_ablation_no_attn"] = _preset("bridge_ablation_no_attn", attention=False, **_ablate)


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; run 'marlab list-presets'")
    return PRESETS[name]
