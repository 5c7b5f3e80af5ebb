"""Experiment configuration: JSON load/save and validation."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from metatune.agents.runner import AGENT_KINDS, EnvConfig
from metatune.envs import EnvError
from metatune.metrics import MetricKind
from metatune.space import AGENT_HPARAMS, PRESETS, HyperparamSpace, preset_space

OPTIMIZER_NAMES = ("rlopt_bc", "rlopt", "random_search")
SAMPLERS = ("lhs", "uniform")

# Limits any range must respect: (low, high, high is inclusive, message).
_HARD_LIMITS = {
    "gamma": (0.0, 1.0, False, "range must lie in [0, 1)"),
    "epsilon0": (0.0, 1.0, True, "range must lie in [0, 1]"),
    "per_alpha": (0.0, 1.0, True, "range must lie in [0, 1]"),
    "per_beta0": (0.0, 1.0, True, "range must lie in [0, 1]"),
    "gae_lambda": (0.0, 1.0, True, "range must lie in [0, 1]"),
    "entropy_coef": (0.0, float("inf"), True, "range must be >= 0"),
    "value_coef": (0.0, float("inf"), True, "range must be >= 0"),
    "alpha_lr": (0.0, float("inf"), True, "range must be >= 0"),
}


class ConfigError(ValueError):
    """Invalid or unparsable experiment configuration."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    env: EnvConfig
    agent_kind: str = "tabular_q_per"
    preset: str = "original"
    space: HyperparamSpace | None = None
    pinned: Mapping[str, float] = field(default_factory=dict)
    optimizers: tuple[str, ...] = OPTIMIZER_NAMES
    meta_episodes: int = 10
    train_episodes: int = 3000
    metric: str = MetricKind.BEST_EVAL_SCORE.value
    m: int = 10
    rollout_episodes: int | None = None   # None: 2.5% of train_episodes, at least 3
    psi_size: int = 5
    demo_subset: int = 3
    n_init: int = 2
    candidate_batch: int = 500
    candidate_sampler: str = "lhs"
    random_search_radius: float = 0.2
    use_bc: bool = True
    n_evals: int = 20
    eval_episodes: int = 5
    record_timing: bool = False
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5)

    def __post_init__(self):
        if self.space is None:
            object.__setattr__(self, "space", preset_space(self.agent_kind, self.preset))
        object.__setattr__(self, "optimizers", tuple(self.optimizers))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "pinned", {k: float(v) for k, v in self.pinned.items()})
        validate(self)

    def search_space(self) -> HyperparamSpace:
        return self.space.subspace(self.pinned) if self.pinned else self.space

    def effective_rollout_episodes(self) -> int:
        from metatune.optimizer import rollout_budget
        if self.rollout_episodes is None:
            return rollout_budget(self.train_episodes)
        return int(self.rollout_episodes)

    def problem(self):
        from metatune.optimizer import Problem
        return Problem(self.agent_kind, self.env, self.search_space(), dict(self.pinned), self.metric)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "env": {"kind": self.env.kind, "params": dict(self.env.params)},
            "agent_kind": self.agent_kind,
            "space": {"preset": self.preset, "dims": self.space.to_list(), "pinned": dict(self.pinned)},
            "optimizers": list(self.optimizers),
            "meta_episodes": self.meta_episodes,
            "train_episodes": self.train_episodes,
            "metric": self.metric,
            "m": self.m,
            "rollout_episodes": self.rollout_episodes,
            "psi_size": self.psi_size,
            "demo_subset": self.demo_subset,
            "n_init": self.n_init,
            "candidate_batch": self.candidate_batch,
            "candidate_sampler": self.candidate_sampler,
            "random_search_radius": self.random_search_radius,
            "use_bc": self.use_bc,
            "n_evals": self.n_evals,
            "eval_episodes": self.eval_episodes,
            "record_timing": self.record_timing,
            "seeds": list(self.seeds),
        }

    def config_hash(self) -> str:
        """Digest of everything except the seed list."""
        body = self.to_dict()
        body.pop("seeds")
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_TOP_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"preset", "pinned"}
_ENV_KEYS = {"kind", "params"}
_SPACE_KEYS = {"preset", "dims", "pinned"}


def _reject_unknown(d: Mapping, allowed: set, where: str):
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{where}{extra[0]}" if where else extra[0], "unknown key")


def _count(cfg, name, minimum=1):
    v = getattr(cfg, name)
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(name, f"must be an integer >= {minimum}")


def validate(cfg: ExperimentConfig) -> None:
    if not isinstance(cfg.name, str) or not cfg.name or "/" in cfg.name or cfg.name.startswith("."):
        raise ConfigError("name", "must be a non-empty directory-safe string")
    if cfg.agent_kind not in AGENT_KINDS:
        raise ConfigError("agent_kind", f"must be one of {AGENT_KINDS}")
    if cfg.preset not in PRESETS[cfg.agent_kind]:
        raise ConfigError("space.preset", f"unknown preset {cfg.preset!r}")
    try:
        cfg.env.make()
    except (EnvError, TypeError, ValueError) as exc:
        raise ConfigError("env", str(exc)) from None

    expected = set(AGENT_HPARAMS[cfg.agent_kind])
    if set(cfg.space.names) != expected:
        raise ConfigError("space.dims", f"dimensions must be {sorted(expected)}")
    for dim in cfg.space.dims:
        lo, hi, inclusive, msg = _HARD_LIMITS[dim.name]
        if dim.low < lo or dim.high > hi or (dim.high == hi and not inclusive):
            raise ConfigError(f"space.{dim.name}", msg)
    for name, value in cfg.pinned.items():
        if name not in cfg.space.names:
            raise ConfigError(f"space.pinned.{name}", "not a dimension of the space")
        dim = cfg.space.dims[cfg.space.names.index(name)]
        if not dim.low <= value <= dim.high:
            raise ConfigError(f"space.pinned.{name}", f"{value} outside [{dim.low}, {dim.high}]")
    if len(cfg.pinned) >= cfg.space.d:
        raise ConfigError("space.pinned", "at least one dimension must stay free")

    if not cfg.optimizers:
        raise ConfigError("optimizers", "need at least one optimizer")
    for opt in cfg.optimizers:
        if opt not in OPTIMIZER_NAMES:
            raise ConfigError("optimizers", f"unknown optimizer {opt!r}")
    if len(set(cfg.optimizers)) != len(cfg.optimizers):
        raise ConfigError("optimizers", "duplicate entries")
    try:
        MetricKind(cfg.metric)
    except ValueError:
        raise ConfigError("metric", f"must be one of {[k.value for k in MetricKind]}") from None
    for name in ("meta_episodes", "train_episodes", "m", "psi_size", "n_init",
                 "candidate_batch", "n_evals", "eval_episodes"):
        _count(cfg, name)
    _count(cfg, "demo_subset", 0)
    if cfg.m > cfg.candidate_batch:
        raise ConfigError("m", "cannot exceed candidate_batch")
    e = cfg.rollout_episodes
    if e is not None and (isinstance(e, bool) or not isinstance(e, int) or e == 1 or e < 0):
        raise ConfigError("rollout_episodes", "must be null, 0 (skip) or an integer >= 2")
    if cfg.candidate_sampler not in SAMPLERS:
        raise ConfigError("candidate_sampler", f"must be one of {SAMPLERS}")
    if not 0.0 < cfg.random_search_radius <= 1.0:
        raise ConfigError("random_search_radius", "must lie in (0, 1]")
    for name in ("use_bc", "record_timing"):
        if not isinstance(getattr(cfg, name), bool):
            raise ConfigError(name, "must be true or false")
    if not cfg.seeds:
        raise ConfigError("seeds", "need at least one seed")
    if len(set(cfg.seeds)) != len(cfg.seeds) or min(cfg.seeds) < 0:
        raise ConfigError("seeds", "must be distinct non-negative integers")


def config_from_dict(raw: Mapping[str, Any]) -> ExperimentConfig:
    if not isinstance(raw, Mapping):
        raise ConfigError("<root>", "expected a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "")
    for req in ("name", "env"):
        if req not in raw:
            raise ConfigError(req, "required")
    env = raw["env"]
    if not isinstance(env, Mapping) or "kind" not in env:
        raise ConfigError("env.kind", "required")
    _reject_unknown(env, _ENV_KEYS, "env.")
    kwargs = {k: v for k, v in raw.items() if k not in ("env", "space")}
    kwargs["env"] = EnvConfig(str(env["kind"]), dict(env.get("params") or {}))
    agent_kind = kwargs.get("agent_kind", "tabular_q_per")
    if agent_kind not in AGENT_KINDS:
        raise ConfigError("agent_kind", f"must be one of {AGENT_KINDS}")
    space = raw.get("space") or {}
    if not isinstance(space, Mapping):
        raise ConfigError("space", "expected an object")
    _reject_unknown(space, _SPACE_KEYS, "space.")
    preset = space.get("preset", "original")
    if preset not in PRESETS[agent_kind]:
        raise ConfigError("space.preset", f"unknown preset {preset!r}")
    kwargs["preset"] = preset
    if space.get("dims") is not None:
        try:
            kwargs["space"] = HyperparamSpace.from_list(space["dims"])
        except (KeyError, TypeError, ValueError) as exc:
            names = [d.get("name") for d in space["dims"] if isinstance(d, Mapping)]
            bad = next((n for n in names if n and n in str(exc)), None)
            raise ConfigError(f"space.{bad}" if bad else "space.dims", str(exc)) from None
    kwargs["pinned"] = dict(space.get("pinned") or {})
    if "optimizers" in kwargs:
        kwargs["optimizers"] = tuple(kwargs["optimizers"])
    if "seeds" in kwargs:
        kwargs["seeds"] = tuple(kwargs["seeds"])
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    return config_from_dict(raw)


def dumps_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2) + "\n"


def save_config(cfg: ExperimentConfig, path) -> None:
    from metatune.harness import atomic_write_text
    atomic_write_text(path, dumps_config(cfg))
