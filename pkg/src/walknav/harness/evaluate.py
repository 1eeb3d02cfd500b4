"""Policy evaluation and the obstacle-displacement robustness sweep."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from walknav.envs.core import REASON_COLLISION, REASON_FALL, REASON_GOAL, REASON_TIMEOUT
from walknav.envs.layout import LayoutError
from walknav.harness.checkpoint import CheckpointError
from walknav.harness.config import ConfigError, parse_config
from walknav.harness.train import build_env, load_policy
from walknav.ppo import sample_action
from walknav.rng import eval_stream


@dataclass
class EvalReport:
    episodes: int
    success_rate: float
    collision_rate: float
    fall_rate: float
    timeout_rate: float
    mean_return: float
    mean_length: float
    mean_final_distance: float
    mean_step_length: float = None         # stepper only
    mean_net_displacement: float = 0.0     # |final base - initial base|
    mean_forward_displacement: float = 0.0  # final x - initial x
    records: list = field(default_factory=list, repr=False)

    def as_dict(self):
        return {k: v for k, v in self.__dict__.items() if k != "records"}


@dataclass
class LoadedPolicy:
    config: object
    policy: object
    obs_layout: object


def load_checkpoint_policy(path):
    rec, policy, _, obs_layout = load_policy(path)
    return LoadedPolicy(parse_config(rec["config"]), policy, obs_layout)


def _env_for(loaded, layout):
    env = build_env(loaded.config, layout)
    if env.observation_layout != loaded.obs_layout:
        raise CheckpointError(
            "layout is incompatible with the checkpoint's observation layout "
            f"({env.observation_layout.to_text()} vs {loaded.obs_layout.to_text()})")
    return env


def run_episode(env, policy, rng, deterministic=True, on_step=None):
    """One episode; returns a record dict with return, length, reason and path data."""
    res = env.reset(rng)
    obs = res.obs
    start = res.info["base_xy"]
    ret, length, steps = 0.0, 0, []
    info = res.info
    while True:
        if deterministic:
            action = policy.mean(obs)
        else:
            action, _ = sample_action(policy, obs, rng)
        res = env.step(action)
        ret += res.reward
        length += 1
        info = res.info
        if on_step is not None:
            on_step(length, env, res)
        if "step_length" in info:
            steps.append(info["step_length"])
        obs = res.obs
        if res.done:
            break
    end = info["base_xy"]
    return {"return": ret, "length": length, "reason": info.get("reason", REASON_TIMEOUT),
            "final_distance": info.get("distance_to_goal", math.nan),
            "net_displacement": math.hypot(end[0] - start[0], end[1] - start[1]),
            "forward_displacement": end[0] - start[0], "step_lengths": steps}


def summarize(records):
    n = len(records)
    reasons = [r["reason"] for r in records]

    def rate(o):
        return sum(1 for x in reasons if x == o) / n

    # step length over episodes that did not end in a failure
    ok = [s for r in records if r["reason"] not in (REASON_COLLISION, REASON_FALL)
          for s in r["step_lengths"]]
    has_steps = any(r["step_lengths"] for r in records)
    return EvalReport(
        episodes=n,
        success_rate=rate(REASON_GOAL),
        collision_rate=rate(REASON_COLLISION),
        fall_rate=sum(1 for x in reasons if x not in (REASON_GOAL, REASON_COLLISION, REASON_TIMEOUT)) / n,
        timeout_rate=rate(REASON_TIMEOUT),
        mean_return=float(np.mean([r["return"] for r in records])),
        mean_length=float(np.mean([r["length"] for r in records])),
        mean_final_distance=float(np.mean([r["final_distance"] for r in records])),
        mean_step_length=float(np.mean(ok)) if (has_steps and ok) else None,
        mean_net_displacement=float(np.mean([r["net_displacement"] for r in records])),
        mean_forward_displacement=float(np.mean([r["forward_displacement"] for r in records])),
        records=records,
    )


def evaluate(checkpoint, layout=None, episodes=100, deterministic=True, seed=0, on_step=None):
    """Run ``episodes`` seeded episodes of a trained policy.

    ``checkpoint`` is a path or a LoadedPolicy; ``layout`` defaults to the
    training layout and may be a name, path or EnvironmentLayout.  Episode
    ``i`` always uses the same random stream, so two layouts evaluated with the
    same seed see identical start jitter.  Divergent biped episodes count as
    falls.
    """
    if episodes < 1:
        raise ConfigError("evaluation needs at least one episode")
    loaded = checkpoint if isinstance(checkpoint, LoadedPolicy) else load_checkpoint_policy(checkpoint)
    env = _env_for(loaded, layout)
    records = []
    for ep in range(episodes):
        hook = (lambda t, e, r, ep=ep: on_step(ep, t, e, r)) if on_step is not None else None
        records.append(run_episode(env, loaded.policy, eval_stream(seed, ep), deterministic, hook))
    return summarize(records)


class UniformRandomPolicy:
    """Baseline that ignores observations and draws actions uniformly from [-1, 1]."""

    def __init__(self, action_dim, rng):
        self.action_dim, self.rng = action_dim, rng

    def mean(self, obs):
        return self.rng.uniform(-1.0, 1.0, size=self.action_dim)


def random_baseline(config, layout=None, episodes=100, seed=0):
    """EvalReport of the uniform random policy on ``config``'s environment."""
    if episodes < 1:
        raise ConfigError("evaluation needs at least one episode")
    env = build_env(config, layout)
    records = []
    for ep in range(episodes):
        rng = eval_stream(seed, ep)
        records.append(run_episode(env, UniformRandomPolicy(env.action_dim, rng), rng))
    return summarize(records)


# -- robustness --------------------------------------------------------------

@dataclass(frozen=True)
class SweepGrid:
    offsets: tuple = (-1.0, -0.5, 0.0, 0.5, 1.0)
    axes: tuple = ("x", "y")
    targets: tuple = ("obstacle", "destination")
    episodes: int = 20
    seed: int = 0


def parse_grid(text):
    """key=value grid file: ``offsets``, ``axes``, ``targets`` (comma lists), ``episodes``, ``seed``."""
    kw = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        items = [v.strip() for v in value.split(",") if v.strip()]
        try:
            if key == "offsets":
                kw[key] = tuple(float(v) for v in items)
                if not all(math.isfinite(v) for v in kw[key]):
                    raise ConfigError(f"line {lineno}: offsets must be finite")
            elif key == "axes":
                if not set(items) <= {"x", "y"}:
                    raise ConfigError(f"line {lineno}: axes must be x and/or y")
                kw[key] = tuple(items)
            elif key == "targets":
                if not set(items) <= {"obstacle", "destination"}:
                    raise ConfigError(f"line {lineno}: targets must be obstacle and/or destination")
                kw[key] = tuple(items)
            elif key in ("episodes", "seed"):
                kw[key] = int(value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: {exc}") from None
    grid = SweepGrid(**kw)
    if grid.episodes < 1:
        raise ConfigError("grid episodes must be at least 1")
    return grid


SWEEP_COLUMNS = ("target_kind", "target_index", "axis", "offset", "valid",
                 "success", "collision", "timeout", "mean_return")


def robustness_sweep(checkpoint, layout, grid, out_path=None):
    """Evaluate the policy with each target displaced along each axis by each offset.

    Returns the list of row dicts (also written as CSV to ``out_path``).  A
    displacement that breaks the layout invariants (obstacle over the start or
    goal, or outside the workspace) gives an invalid row with empty rates.
    """
    from walknav.envs import resolve_layout
    loaded = checkpoint if isinstance(checkpoint, LoadedPolicy) else load_checkpoint_policy(checkpoint)
    base = resolve_layout(layout if layout is not None else loaded.config.layout)
    cells = []
    for kind in grid.targets:
        indices = range(len(base.obstacles)) if kind == "obstacle" else [0]
        for idx in indices:
            for axis in grid.axes:
                for off in grid.offsets:
                    cells.append((kind, idx, axis, off))
    rows = []
    for kind, idx, axis, off in cells:
        row = {"target_kind": kind, "target_index": idx, "axis": axis, "offset": off}
        try:
            lay = base.displaced(kind, idx, axis, off)
        except LayoutError:
            lay = None
        if lay is None:
            row.update(valid=0, success=math.nan, collision=math.nan, timeout=math.nan,
                       mean_return=math.nan)
        else:
            rep = evaluate(loaded, lay, grid.episodes, True, grid.seed)
            row.update(valid=1, success=rep.success_rate, collision=rep.collision_rate,
                       timeout=rep.timeout_rate, mean_return=rep.mean_return)
        rows.append(row)
    if out_path is not None:
        write_sweep(rows, out_path)
    return rows


def _cell(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_sweep(rows, out):
    """Write sweep rows to a path or an open text file."""
    if hasattr(out, "write"):
        w = csv.writer(out, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_cell(r[c]) for c in SWEEP_COLUMNS])
        return
    with open(out, "w", newline="") as fh:
        write_sweep(rows, fh)
