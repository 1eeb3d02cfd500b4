"""PPO learner: diagonal Gaussian policy, rollout collection, GAE, clipped updates."""

import math
from dataclasses import dataclass, field, fields

import numpy as np

from walknav._accel import kernel
from walknav.nnet import (
    AdamState, DivergenceError, MlpSpec, ParameterSet, adam_step, backward, forward,
    init_params,
)

LOG_STD_MIN, LOG_STD_MAX = -5.0, 1.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class PpoConfig:
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

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.clip_eps <= 0 or self.max_grad_norm <= 0 or self.lr <= 0:
            raise ValueError("clip_eps, max_grad_norm and lr must be positive")
        if self.epochs < 1 or self.minibatch_size < 1 or self.rollout_horizon < 1:
            raise ValueError("epochs, minibatch_size and rollout_horizon must be >= 1")
        if self.value_coef < 0 or self.entropy_coef < 0:
            raise ValueError("loss coefficients must be non-negative")


@dataclass
class GaussianPolicy:
    mean_net: ParameterSet
    log_std: np.ndarray
    action_scale: np.ndarray = None

    def __post_init__(self):
        self.log_std = np.clip(np.asarray(self.log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX)
        if self.action_scale is None:
            self.action_scale = np.ones(self.mean_net.spec.n_out)
        if self.mean_net.spec.output_activation != "tanh":
            raise ValueError("policy mean network must use a tanh output")

    @classmethod
    def create(cls, obs_dim, act_dim, hidden=(256, 256), seed=0, log_std_init=-0.7):
        spec = MlpSpec((obs_dim, *hidden, act_dim), output_activation="tanh")
        return cls(init_params(spec, seed), np.full(act_dim, log_std_init))

    def mean(self, obs):
        out, _ = forward(self.mean_net, obs)
        return out * self.action_scale

    def flat(self):
        return np.concatenate([self.mean_net.flat(), self.log_std])

    def with_flat(self, vec):
        n = self.mean_net.spec.n_params()
        return GaussianPolicy(ParameterSet.from_flat(self.mean_net.spec, vec[:n]),
                              vec[n:].copy(), self.action_scale.copy())

    def copy(self):
        return GaussianPolicy(self.mean_net.copy(), self.log_std.copy(), self.action_scale.copy())


def gaussian_log_prob(mean, log_std, action):
    z = (action - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - mean.shape[-1] * _HALF_LOG_2PI


def gaussian_entropy(log_std):
    return float(np.sum(log_std) + log_std.size * (0.5 + _HALF_LOG_2PI))


def sample_action(policy, obs, rng):
    """Draw one action; returns ``(action, log_prob)``."""
    mean = policy.mean(obs)
    action = mean + np.exp(policy.log_std) * rng.standard_normal(mean.shape[-1])
    return action, float(gaussian_log_prob(mean, policy.log_std, action))


def value(value_net, obs):
    out, _ = forward(value_net, obs)
    return out[..., 0]


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    log_prob: float
    reward: float
    value: float
    terminated: bool = False
    truncated: bool = False
    final_value: float = 0.0   # critic value of the last observation when truncated


class RolloutBuffer:
    """Fixed-capacity transition store for one worker."""

    def __init__(self, capacity, obs_dim, act_dim):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, act_dim))
        self.log_probs = np.zeros(capacity)
        self.rewards = np.zeros(capacity)
        self.values = np.zeros(capacity)
        self.terminated = np.zeros(capacity, dtype=bool)
        self.truncated = np.zeros(capacity, dtype=bool)
        self.final_values = np.zeros(capacity)
        self.bootstrap_value = None
        self.size = 0

    @property
    def full(self):
        return self.size == self.capacity

    def append(self, tr):
        if self.full:
            raise IndexError("rollout buffer is full")
        i = self.size
        self.obs[i] = tr.obs
        self.actions[i] = tr.action
        self.log_probs[i] = tr.log_prob
        self.rewards[i] = tr.reward
        self.values[i] = tr.value
        self.terminated[i] = tr.terminated
        self.truncated[i] = tr.truncated
        self.final_values[i] = tr.final_value
        self.size += 1

    def next_values(self):
        """Critic value of each transition's successor state (0 after a termination)."""
        nxt = np.empty(self.capacity)
        nxt[:-1] = self.values[1:]
        nxt[-1] = self.bootstrap_value
        nxt[self.truncated] = self.final_values[self.truncated]
        nxt[self.terminated] = 0.0
        return nxt


@kernel
def gae_kernel(rewards, values, next_values, terminated, truncated, gamma, lam):
    n = rewards.shape[0]
    adv = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        live = 0.0 if terminated[t] else 1.0
        cont = 0.0 if (terminated[t] or truncated[t]) else 1.0
        delta = rewards[t] + gamma * next_values[t] * live - values[t]
        running = delta + gamma * lam * cont * running
        adv[t] = running
    return adv


def compute_gae(buffer, gamma, gae_lambda):
    """Generalized advantage estimates; returns ``(advantages, returns)``.

    Terminations stop bootstrapping; truncations bootstrap from the stored
    final value.  Both cut the recursion, since the next slot starts a new
    episode.
    """
    if not buffer.full or buffer.bootstrap_value is None:
        raise ValueError("GAE needs a full buffer with a bootstrap value")
    adv = gae_kernel(buffer.rewards, buffer.values, buffer.next_values(),
                     buffer.terminated, buffer.truncated, float(gamma), float(gae_lambda))
    return adv, adv + buffer.values


def clipped_surrogate(ratio, advantage, clip_eps):
    return min(ratio * advantage, min(max(ratio, 1.0 - clip_eps), 1.0 + clip_eps) * advantage)


@dataclass
class UpdateStats:
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    approx_kl: float = 0.0
    clip_fraction: float = 0.0
    policy_grad_norm: float = 0.0
    value_grad_norm: float = 0.0

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def normalize_advantages(adv):
    """Zero-mean, unit-std advantages; all zeros when the spread is below 1e-8."""
    centered = adv - adv.mean()
    std = centered.std()
    if std < 1e-8:
        return np.zeros_like(adv)
    return centered / std


def policy_loss_and_grad(policy, obs, actions, old_log_probs, advantages, clip_eps, entropy_coef):
    """Clipped-surrogate loss (to minimise) and its gradient w.r.t. ``policy.flat()``."""
    y, cache = forward(policy.mean_net, obs)
    mean = y * policy.action_scale
    inv_std = np.exp(-policy.log_std)
    z = (actions - mean) * inv_std
    logp = gaussian_log_prob(mean, policy.log_std, actions)
    ratio = np.exp(logp - old_log_probs)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    surrogate = np.minimum(unclipped, clipped)
    entropy = gaussian_entropy(policy.log_std)
    n = obs.shape[0]
    loss = -surrogate.mean() - entropy_coef * entropy

    # d loss / d logp, zero where the clipped branch is the active minimum
    dlogp = np.where(unclipped <= clipped, -unclipped / n, 0.0)
    dmean = dlogp[:, None] * z * inv_std
    dlog_std = (dlogp[:, None] * (z * z - 1.0)).sum(axis=0) - entropy_coef
    net_grads, _ = backward(policy.mean_net, cache, dmean * policy.action_scale)
    grad = np.concatenate([net_grads.flat(), dlog_std])
    info = {
        "entropy": entropy,
        "approx_kl": float(np.mean((ratio - 1.0) - (logp - old_log_probs))),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
    }
    return float(loss), grad, info


def value_loss_and_grad(value_net, obs, returns, value_coef):
    out, cache = forward(value_net, obs)
    err = out[:, 0] - returns
    loss = float(np.mean(err * err))
    g = (2.0 * value_coef / obs.shape[0]) * err
    grads, _ = backward(value_net, cache, g[:, None])
    return loss, grads.flat()


def _clip_norm(g, max_norm):
    norm = float(np.sqrt(np.dot(g, g)))
    if norm > max_norm:
        g = g * (max_norm / norm)
    return g, norm


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self):
        return self.obs.shape[0]


def make_batch(buffers, gamma, gae_lambda):
    """Run GAE per worker buffer and concatenate in worker order."""
    advs, rets = zip(*(compute_gae(b, gamma, gae_lambda) for b in buffers))
    return Batch(np.concatenate([b.obs for b in buffers]),
                 np.concatenate([b.actions for b in buffers]),
                 np.concatenate([b.log_probs for b in buffers]),
                 np.concatenate(advs), np.concatenate(rets))


def update(policy, value_net, batch, config, actor_state, critic_state, rng):
    """Run ``config.epochs`` passes of shuffled minibatch updates.

    Returns ``(policy, value_net, actor_state, critic_state, UpdateStats)``;
    inputs are not modified.  Raises DivergenceError on a non-finite loss.
    """
    n = len(batch)
    mb = min(config.minibatch_size, n)
    acc = UpdateStats()
    count = 0
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, mb):
            idx = perm[start:start + mb]
            adv = normalize_advantages(batch.advantages[idx])
            p_loss, p_grad, info = policy_loss_and_grad(
                policy, batch.obs[idx], batch.actions[idx], batch.log_probs[idx],
                adv, config.clip_eps, config.entropy_coef)
            v_loss, v_grad = value_loss_and_grad(
                value_net, batch.obs[idx], batch.returns[idx], config.value_coef)
            total = p_loss + config.value_coef * v_loss
            if not math.isfinite(total):
                raise DivergenceError(f"non-finite loss {total}")
            p_grad, p_norm = _clip_norm(p_grad, config.max_grad_norm)
            v_grad, v_norm = _clip_norm(v_grad, config.max_grad_norm)
            flat, actor_state = adam_step(policy.flat(), p_grad, actor_state)
            policy = policy.with_flat(flat)
            vflat, critic_state = adam_step(value_net.flat(), v_grad, critic_state)
            value_net = ParameterSet.from_flat(value_net.spec, vflat)
            acc.policy_loss += p_loss
            acc.value_loss += v_loss
            acc.entropy += info["entropy"]
            acc.approx_kl += info["approx_kl"]
            acc.clip_fraction += info["clip_fraction"]
            acc.policy_grad_norm += p_norm
            acc.value_grad_norm += v_norm
            count += 1
    stats = UpdateStats(**{k: v / count for k, v in acc.as_dict().items()})
    return policy, value_net, actor_state, critic_state, stats


def new_optimizer_states(policy, value_net, lr):
    return (AdamState.zeros(policy.flat().size, lr=lr),
            AdamState.zeros(value_net.spec.n_params(), lr=lr))


@dataclass
class RolloutWorker:
    """One environment instance plus its private RNG stream and episode tally."""

    env: object
    rng: np.random.Generator
    obs: np.ndarray = None
    ep_return: float = 0.0
    ep_length: int = 0
    ep_terms: dict = field(default_factory=dict)

    def start(self):
        self.obs = self.env.reset(self.rng).obs
        self.ep_return, self.ep_length = 0.0, 0
        self.ep_terms = {n: 0.0 for n in self.env.reward_terms}


def collect(workers, policy, value_net, steps_per_worker, on_step=None, gamma=0.99):
    """Step all workers in lockstep against a fixed policy snapshot.

    A terminal step that carries ``info["absorbing_reward"]`` (goal reached)
    is stored as a cut with the closed-form value of that absorbing state,
    ``r / (1 - gamma)``, instead of zero.

    Returns ``(buffers, episodes, term_sums)`` where ``episodes`` lists finished
    episode records in completion order (worker index breaks ties) and
    ``term_sums`` accumulates ``info["terms"]`` over all steps.
    """
    for w in workers:
        if w.obs is None:
            w.start()
    obs_dim = workers[0].obs.shape[0]
    act_dim = policy.mean_net.spec.n_out
    buffers = [RolloutBuffer(steps_per_worker, obs_dim, act_dim) for _ in workers]
    episodes = []
    term_sums = {n: 0.0 for n in workers[0].env.reward_terms}
    std = np.exp(policy.log_std)
    for _ in range(steps_per_worker):
        obs = np.stack([w.obs for w in workers])
        means = policy.mean(obs)
        values = value(value_net, obs)
        for i, w in enumerate(workers):
            action = means[i] + std * w.rng.standard_normal(act_dim)
            logp = float(gaussian_log_prob(means[i], policy.log_std, action))
            res = w.env.step(action)
            if on_step is not None:
                on_step(i, w, res)
            terminated, truncated, final_value = res.terminated, res.truncated, 0.0
            if terminated and "absorbing_reward" in res.info:
                terminated, truncated = False, True
                final_value = res.info["absorbing_reward"] / (1.0 - gamma) if gamma < 1 else 0.0
            elif truncated and not terminated:
                final_value = float(value(value_net, res.obs))
            buffers[i].append(Transition(w.obs, action, logp, res.reward, float(values[i]),
                                         terminated, truncated, final_value))
            w.ep_return += res.reward
            w.ep_length += 1
            for name, v in res.info.get("terms", {}).items():
                w.ep_terms[name] += v
                term_sums[name] += v
            if res.done:
                episodes.append({"return": w.ep_return, "length": w.ep_length,
                                 "reason": res.info.get("reason", "timeout"),
                                 "terms": dict(w.ep_terms), "info": res.info})
                w.start()
            else:
                w.obs = res.obs
    last_values = value(value_net, np.stack([w.obs for w in workers]))
    for b, v in zip(buffers, last_values):
        b.bootstrap_value = float(v)
    return buffers, episodes, term_sums


def collect_rollout(env, policy, value_net, horizon, rng):
    """Single-environment rollout of ``horizon`` steps (resets ``env`` first)."""
    w = RolloutWorker(env, rng)
    buffers, _, _ = collect([w], policy, value_net, horizon)
    return buffers[0]
