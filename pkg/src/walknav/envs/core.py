"""Shared environment machinery: gait clock, observation layout, step results."""

import math
from dataclasses import dataclass, field, replace

import numpy as np

MAX_EPISODE_STEPS = 400

# outcome codes carried in StepResult.info["reason"] when an episode ends
REASON_GOAL = "goal"
REASON_COLLISION = "collision"
REASON_FALL = "fell"
REASON_TIMEOUT = "timeout"
REASON_DIVERGED = "diverged"
OUTCOMES = (REASON_GOAL, REASON_COLLISION, REASON_FALL, REASON_TIMEOUT)


class ActionError(ValueError):
    pass


@dataclass(frozen=True)
class Clock:
    """Periodic gait phase in [0, 1)."""

    phase: float = 0.0
    period: float = 0.8
    offsets: tuple = (0.0, 0.5)   # left, right
    duty: float = 0.5
    ramp: float = 0.02

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("clock period must be positive")
        if not 0.0 < self.duty < 1.0:
            raise ValueError("duty must lie in (0, 1)")
        if self.ramp <= 0:
            raise ValueError("ramp width must be positive")


def clock_advance(clock, dt):
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return replace(clock, phase=math.fmod(clock.phase + dt / clock.period, 1.0))


def clock_features(clock):
    a = 2.0 * math.pi * clock.phase
    return math.sin(a), math.cos(a)


LEGS = ("left", "right")


def stance_indicator(clock, leg):
    """Trapezoidal stance weight of ``leg`` at the current phase.

    1 inside the stance window ``[offset, offset + duty)``, 0 in swing, with
    linear ramps of width ``clock.ramp`` centred on the window edges.
    """
    offset = clock.offsets[LEGS.index(leg)]
    u = (clock.phase - offset) % 1.0
    if u < clock.duty:
        dist = min(u, clock.duty - u)
    else:
        dist = -min(u - clock.duty, 1.0 - u)
    return min(max(0.5 + dist / clock.ramp, 0.0), 1.0)


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float = 0.0
    terminated: bool = False
    truncated: bool = False
    info: dict = field(default_factory=dict)

    @property
    def done(self):
        return self.terminated or self.truncated


@dataclass(frozen=True)
class ObservationLayout:
    """Ordered named observation segments with fixed scale divisors."""

    segments: tuple   # of (name, dim, scale)

    @property
    def dim(self):
        return sum(d for _, d, _ in self.segments)

    def names(self):
        return [n for n, _, _ in self.segments]

    def assemble(self, values):
        """Concatenate raw segment values, each divided by its scale."""
        parts = []
        for name, dim, scale in self.segments:
            v = np.asarray(values[name], dtype=np.float64).reshape(-1)
            if v.size != dim:
                raise ValueError(f"segment {name!r} expects {dim} values, got {v.size}")
            parts.append(v / scale)
        return np.concatenate(parts)

    def to_text(self):
        return ";".join(f"{n}:{d}:{s!r}" for n, d, s in self.segments)

    @classmethod
    def from_text(cls, text):
        segs = []
        for item in text.split(";"):
            n, d, s = item.split(":")
            segs.append((n, int(d), float(s)))
        return cls(tuple(segs))


class Env:
    """Single-instance environment with a gym-like reset/step contract.

    Subclasses set ``observation_layout``, ``action_dim`` and ``reward_terms``
    (the fixed ordered names reported in ``info["terms"]``), and implement
    ``reset``, ``step``, ``get_state`` and ``set_state``.  ``get_state`` must
    return a flat float64 array that restores the instance exactly.
    """

    observation_layout: ObservationLayout
    action_dim: int
    reward_terms: tuple = ()
    max_steps = MAX_EPISODE_STEPS

    def reset(self, rng):
        raise NotImplementedError

    def step(self, action):
        raise NotImplementedError

    def get_state(self):
        raise NotImplementedError

    def set_state(self, state):
        raise NotImplementedError

    def absorbing_reward(self):
        """Per-step reward for standing still at the destination.

        A goal-reaching step is terminal for the environment, but the learner
        treats the goal as an absorbing state that keeps paying this reward
        (see ``ppo.collect``); without it, hovering just outside the goal disk
        would out-earn entering it.
        """
        raise NotImplementedError

    def _finish(self, reward, reached, collided, info):
        """Episode bookkeeping shared by the navigation environments.

        Goal takes precedence over collision; both terminate.  The step limit
        truncates.
        """
        terminated = truncated = False
        if reached:
            terminated, info["reason"] = True, REASON_GOAL
            info["absorbing_reward"] = self.absorbing_reward()
        elif collided:
            terminated, info["reason"] = True, REASON_COLLISION
        elif self.steps >= self.max_steps:
            truncated, info["reason"] = True, REASON_TIMEOUT
        return StepResult(self._obs(), reward, terminated, truncated, info)

    def _check_action(self, action):
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.size != self.action_dim:
            raise ActionError(f"expected {self.action_dim} action components, got {a.size}")
        if not np.all(np.isfinite(a)):
            raise ActionError("non-finite action")
        return np.clip(a, -1.0, 1.0)
