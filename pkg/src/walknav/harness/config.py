"""Experiment configuration and its key=value file format."""

import os
from dataclasses import dataclass, fields, replace
from importlib import resources

from walknav.ppo import PpoConfig
from walknav.rewards import RewardConfig


class ConfigError(ValueError):
    pass


REWARD_FIELDS = ("w_destination", "w_obstacle", "w_initial",
                 "k_destination", "k_obstacle", "k_initial")
PPO_FIELDS = tuple(f.name for f in fields(PpoConfig))


@dataclass(frozen=True)
class ExperimentConfig:
    env: str = "pointmass"
    layout: str = "course4"
    model: str = None        # biped model file or shipped name; None keeps the defaults
    seed: int = 0
    workers: int = 8
    total_steps: int = 2_000_000
    hidden: tuple = (256, 256)
    # PPO
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    minibatch_size: int = 256
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5
    rollout_horizon: int = 4096
    lr: float = 3e-4
    log_std_init: float = -0.7
    # reward overrides; None keeps the layout/default value
    w_destination: float = None
    w_obstacle: float = None
    w_initial: float = None
    k_destination: float = None
    k_obstacle: float = None
    k_initial: float = None
    # bookkeeping
    eval_episodes: int = 100
    checkpoint_every: int = 10
    output_dir: str = "runs/default"

    def __post_init__(self):
        from walknav.envs import ENV_IDS
        if self.env not in ENV_IDS:
            raise ConfigError(f"env must be one of {ENV_IDS}, got {self.env!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.rollout_horizon % self.workers:
            raise ConfigError("rollout_horizon must be a multiple of workers")
        if self.total_steps < 0 or self.eval_episodes < 1 or self.checkpoint_every < 1:
            raise ConfigError("total_steps >= 0, eval_episodes >= 1, checkpoint_every >= 1 required")
        try:
            self.ppo()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def ppo(self):
        return PpoConfig(**{k: getattr(self, k) for k in PPO_FIELDS})

    def reward_config(self):
        cfg = RewardConfig()
        for k in REWARD_FIELDS:
            v = getattr(self, k)
            if v is not None:
                setattr(cfg, k, v)
        return cfg

    def reward_overrides(self):
        return {k: getattr(self, k) for k in REWARD_FIELDS if getattr(self, k) is not None}

    @property
    def steps_per_worker(self):
        return self.rollout_horizon // self.workers

    @property
    def n_updates(self):
        return self.total_steps // self.rollout_horizon

    def with_(self, **kw):
        return replace(self, **kw)


def _format_value(v):
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(cfg):
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        lines.append(f"{f.name} = {_format_value(v)}")
    return "\n".join(lines) + "\n"


def _convert(name, default, raw, lineno):
    try:
        if name == "hidden":
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if name in REWARD_FIELDS or isinstance(default, float):
            return float(raw)
        if isinstance(default, int):
            return int(raw)
        return raw
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {raw!r} for {name}") from None


def parse_config(text, **overrides):
    known = {f.name: f.default for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, known[key], value, lineno)
    values.update(overrides)
    return ExperimentConfig(**values)


def load_config(path, **overrides):
    """Load a config file, or a shipped config by name (``pointmass``, ``stepper``, ``biped``)."""
    if not os.path.exists(path):
        shipped = str(resources.files("walknav") / "data" / f"{path}.cfg")
        if os.path.exists(shipped):
            path = shipped
    with open(path) as fh:
        return parse_config(fh.read(), **overrides)
