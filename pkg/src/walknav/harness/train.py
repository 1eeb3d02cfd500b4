"""Training loop, resumable state and metrics logging."""

import csv
import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from walknav.envs import make_env, resolve_layout
from walknav.envs.core import ObservationLayout, OUTCOMES
from walknav.envs.layout import format_layout
from walknav.harness.checkpoint import CheckpointError, read_records, write_records
from walknav.harness.config import ExperimentConfig, format_config, parse_config
from walknav.nnet import AdamState, DivergenceError, MlpSpec, ParameterSet, init_params
from walknav.ppo import GaussianPolicy, RolloutWorker, collect, make_batch, new_optimizer_states, update
from walknav.rng import dump_state, load_state, training_streams

log = logging.getLogger(__name__)

EXIT_OK, EXIT_DIVERGED, EXIT_INVALID = 0, 2, 3

BASE_COLUMNS = ("update", "env_steps", "episodes", "return_mean", "return_std", "length_mean",
                *(f"n_{o}" for o in OUTCOMES),
                "policy_loss", "value_loss", "entropy", "approx_kl", "clip_fraction",
                "policy_grad_norm", "value_grad_norm")


def build_env(config, layout=None):
    """Environment for ``config``; config reward overrides beat layout-file ones."""
    if config.env == "biped":
        return make_env("biped", reward_config=_merged_rewards(config, None), model=config.model)
    lay = resolve_layout(layout if layout is not None else config.layout)
    return make_env(config.env, lay, _merged_rewards(config, lay))


def _merged_rewards(config, layout):
    from walknav.rewards import RewardConfig
    cfg = layout.reward_config() if layout is not None else RewardConfig()
    for k, v in config.reward_overrides().items():
        setattr(cfg, k, v)
    return cfg


def metrics_columns(env):
    return BASE_COLUMNS + tuple(f"term_{n}" for n in env.reward_terms)


@dataclass
class TrainState:
    config: object
    policy: GaussianPolicy
    value_net: ParameterSet
    actor_opt: AdamState
    critic_opt: AdamState
    learner_rng: np.random.Generator
    workers: list
    update_index: int = 0
    env_steps: int = 0

    @classmethod
    def fresh(cls, config):
        learner_rng, worker_rngs = training_streams(config.seed, config.workers)
        workers = [RolloutWorker(build_env(config), r) for r in worker_rngs]
        for w in workers:
            w.start()
        env = workers[0].env
        obs_dim = env.observation_layout.dim
        policy = GaussianPolicy.create(obs_dim, env.action_dim, config.hidden,
                                       seed=config.seed, log_std_init=config.log_std_init)
        critic = init_params(MlpSpec((obs_dim, *config.hidden, 1)), config.seed + 1)
        a_opt, c_opt = new_optimizer_states(policy, critic, config.lr)
        return cls(config, policy, critic, a_opt, c_opt, learner_rng, workers)

    @property
    def env(self):
        return self.workers[0].env


def _net_records(prefix, params):
    s = params.spec
    yield f"{prefix}.spec", f"{','.join(map(str, s.layer_sizes))}:{s.hidden_activation}:{s.output_activation}"
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        yield f"{prefix}.W{k}", w
        yield f"{prefix}.b{k}", b


def _net_from_records(prefix, rec):
    sizes, hid, out = rec[f"{prefix}.spec"].split(":")
    spec = MlpSpec(tuple(int(x) for x in sizes.split(",")), hid, out)
    n = len(spec.layer_sizes) - 1
    return ParameterSet(spec, [rec[f"{prefix}.W{k}"] for k in range(n)],
                        [rec[f"{prefix}.b{k}"] for k in range(n)])


def _adam_records(prefix, st):
    yield prefix, json.dumps({"t": st.t, "lr": st.lr, "beta1": st.beta1,
                              "beta2": st.beta2, "eps": st.eps}, sort_keys=True)
    yield f"{prefix}.m", st.m
    yield f"{prefix}.v", st.v


def _adam_from_records(prefix, rec):
    h = json.loads(rec[prefix])
    return AdamState(rec[f"{prefix}.m"], rec[f"{prefix}.v"], h["t"], h["lr"],
                     h["beta1"], h["beta2"], h["eps"])


def state_records(state):
    cfg = state.config
    env = state.env
    # where the run was written is not part of the run
    yield "config", format_config(cfg.with_(output_dir=ExperimentConfig.output_dir))
    yield "env", cfg.env
    yield "layout", format_layout(env.layout) if hasattr(env, "layout") else ""
    yield "observation_layout", env.observation_layout.to_text()
    yield "counters", json.dumps({"update_index": state.update_index,
                                  "env_steps": state.env_steps, "workers": len(state.workers)},
                                 sort_keys=True)
    yield from _net_records("actor", state.policy.mean_net)
    yield "actor.log_std", state.policy.log_std
    yield "actor.action_scale", state.policy.action_scale
    yield from _net_records("critic", state.value_net)
    yield from _adam_records("adam.actor", state.actor_opt)
    yield from _adam_records("adam.critic", state.critic_opt)
    yield "rng.learner", dump_state(state.learner_rng)
    for i, w in enumerate(state.workers):
        yield f"worker{i}.rng", dump_state(w.rng)
        yield f"worker{i}.env", w.env.get_state()
        yield f"worker{i}.obs", w.obs
        terms = [w.ep_terms[n] for n in w.env.reward_terms]
        yield f"worker{i}.tally", np.array([w.ep_return, float(w.ep_length), *terms])


def save_checkpoint(state, path):
    tmp = f"{path}.tmp"
    write_records(tmp, state_records(state))
    os.replace(tmp, path)


def load_policy(path):
    """Read only what evaluation needs: ``(records, policy, value_net, obs_layout)``."""
    rec = read_records(path)
    policy = GaussianPolicy(_net_from_records("actor", rec), rec["actor.log_std"],
                            rec["actor.action_scale"])
    return rec, policy, _net_from_records("critic", rec), ObservationLayout.from_text(rec["observation_layout"])


def load_train_state(path):
    rec, policy, critic, obs_layout = load_policy(path)
    cfg = parse_config(rec["config"])
    counters = json.loads(rec["counters"])
    if counters["workers"] != cfg.workers:
        raise CheckpointError("worker count in checkpoint disagrees with its config")
    workers = []
    for i in range(cfg.workers):
        env = build_env(cfg)
        if env.observation_layout != obs_layout:
            raise CheckpointError("checkpoint observation layout does not match environment")
        env.set_state(rec[f"worker{i}.env"])
        w = RolloutWorker(env, load_state(rec[f"worker{i}.rng"]))
        w.obs = rec[f"worker{i}.obs"].copy()
        tally = rec[f"worker{i}.tally"]
        w.ep_return, w.ep_length = float(tally[0]), int(tally[1])
        w.ep_terms = {n: float(v) for n, v in zip(env.reward_terms, tally[2:])}
        workers.append(w)
    return TrainState(cfg, policy, critic, _adam_from_records("adam.actor", rec),
                      _adam_from_records("adam.critic", rec), load_state(rec["rng.learner"]),
                      workers, counters["update_index"], counters["env_steps"])


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def metrics_row(state, episodes, term_sums, stats, n_steps):
    returns = np.array([e["return"] for e in episodes])
    lengths = np.array([e["length"] for e in episodes])
    row = {"update": state.update_index, "env_steps": state.env_steps,
           "episodes": len(episodes),
           "return_mean": returns.mean() if len(returns) else math.nan,
           "return_std": returns.std() if len(returns) else math.nan,
           "length_mean": lengths.mean() if len(lengths) else math.nan}
    for o in OUTCOMES:
        row[f"n_{o}"] = sum(1 for e in episodes if e["reason"] == o)
    row.update(stats.as_dict())
    for n in state.env.reward_terms:
        row[f"term_{n}"] = term_sums[n] / n_steps
    return row


def _rewrite_metrics(path, columns, keep_until):
    """Drop rows logged after update ``keep_until`` (used when resuming)."""
    rows = []
    if os.path.exists(path):
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                if int(r["update"]) <= keep_until:
                    rows.append(r)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


@dataclass
class TrainResult:
    state: TrainState
    metrics_path: str
    checkpoint_path: str
    exit_code: int = EXIT_OK


def train(config, resume=None, stop_after=None):
    """Alternate rollout collection and PPO updates until the step budget is spent.

    ``resume`` is a checkpoint path; ``stop_after`` caps the number of updates
    run by this call (the run can be continued later with ``resume``).
    """
    os.makedirs(config.output_dir, exist_ok=True)
    metrics_path = os.path.join(config.output_dir, "metrics.csv")
    ckpt_path = os.path.join(config.output_dir, "checkpoint.bin")
    if resume is not None:
        state = load_train_state(resume)
        if state.config != config.with_(output_dir=state.config.output_dir):
            log.info("resuming with an updated config")
        state.config = config
    else:
        state = TrainState.fresh(config)
    columns = metrics_columns(state.env)
    _rewrite_metrics(metrics_path, columns, state.update_index)

    ppo_cfg = config.ppo()
    done_here = 0
    while state.update_index < config.n_updates:
        if stop_after is not None and done_here >= stop_after:
            break
        buffers, episodes, term_sums = collect(state.workers, state.policy, state.value_net,
                                               config.steps_per_worker, gamma=ppo_cfg.gamma)
        batch = make_batch(buffers, ppo_cfg.gamma, ppo_cfg.gae_lambda)
        try:
            policy, critic, a_opt, c_opt, stats = update(
                state.policy, state.value_net, batch, ppo_cfg,
                state.actor_opt, state.critic_opt, state.learner_rng)
        except DivergenceError as exc:
            log.error("update %d diverged: %s", state.update_index + 1, exc)
            return TrainResult(state, metrics_path, ckpt_path, EXIT_DIVERGED)
        state.policy, state.value_net, state.actor_opt, state.critic_opt = policy, critic, a_opt, c_opt
        state.update_index += 1
        state.env_steps += config.rollout_horizon
        done_here += 1
        row = metrics_row(state, episodes, term_sums, stats, config.rollout_horizon)
        with open(metrics_path, "a", newline="") as fh:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")
        log.info("update %d steps %d return %.3f len %.1f goal %d coll %d",
                 state.update_index, state.env_steps, row["return_mean"], row["length_mean"],
                 row["n_goal"], row["n_collision"])
        if state.update_index % config.checkpoint_every == 0:
            save_checkpoint(state, ckpt_path)
    save_checkpoint(state, ckpt_path)
    return TrainResult(state, metrics_path, ckpt_path, EXIT_OK)
