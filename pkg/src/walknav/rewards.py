"""Reward function: clock-gated locomotion terms plus exponential distance shaping.

The per-step reward is ``locomotion + distance`` where both parts already carry
their weights.  The distance part sums ``w_i * exp(-k_i * d_i)`` over targets:
the destination attracts (positive weight), obstacles and the episode's start
position repel (negative weights).
"""

import math
from dataclasses import dataclass, field

from walknav.envs.core import stance_indicator

DESTINATION, OBSTACLE, INITIAL = "destination", "obstacle", "initial_position"
TARGET_KINDS = (DESTINATION, OBSTACLE, INITIAL)

DEFAULT_WEIGHTS = {DESTINATION: 0.95, OBSTACLE: -0.2, INITIAL: -0.5}
DEFAULT_K = {DESTINATION: 0.3, OBSTACLE: 1.5, INITIAL: 1.0}


@dataclass(frozen=True)
class DistanceTarget:
    position: tuple
    k: float
    weight: float
    kind: str
    name: str = ""

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}")
        if not self.k > 0:
            raise ValueError("k must be positive")
        if not math.isfinite(self.weight):
            raise ValueError("weight must be finite")
        # a zero weight switches a term off (used by ablations)
        if self.kind == DESTINATION and self.weight < 0:
            raise ValueError("destination weight must be non-negative")
        if self.kind != DESTINATION and self.weight > 0:
            raise ValueError(f"{self.kind} weight must be non-positive")
        if not self.name:
            object.__setattr__(self, "name", self.kind)


def distance_term(base_xy, target):
    d = math.hypot(base_xy[0] - target.position[0], base_xy[1] - target.position[1])
    return math.exp(-target.k * d)


def distance_reward(base_xy, targets):
    """Weighted distance shaping; returns ``(total, {target name: contribution})``."""
    total = 0.0
    per_target = {}
    for t in targets:
        c = t.weight * distance_term(base_xy, t)
        per_target[t.name] = c
        total += c
    return total, per_target


def grouped_distance_terms(per_target, targets):
    """Collapse a per-target breakdown into one value per target kind."""
    out = {"dist_" + kind: 0.0 for kind in TARGET_KINDS}
    for t in targets:
        out["dist_" + t.kind] += per_target[t.name]
    return out


def total_reward(locomotion, distance):
    return locomotion + distance


@dataclass(frozen=True)
class LocomotionCoeffs:
    orientation: float = 5.0      # 1/rad^2
    height: float = 50.0          # 1/m^2
    velocity: float = 2.0         # s^2/m^2
    torque: float = 1e-4          # 1/(N m)^2
    action_rate: float = 0.25
    force_ref: float = 150.0      # N, contact force counted as full support
    speed_ref: float = 0.5        # m/s, swing speed counted as full lift


LOCOMOTION_TERMS = ("foot_force", "foot_speed", "upright", "height",
                    "velocity", "torque", "action_rate")
PENALTY_TERMS = ("torque", "action_rate")


def default_locomotion_weights():
    return {n: (0.05 if n in PENALTY_TERMS else 0.15) for n in LOCOMOTION_TERMS}


@dataclass
class LocomotionState:
    orientation_error: float
    height_error: float
    base_velocity: tuple
    command_velocity: tuple
    foot_forces: tuple          # left, right; N
    foot_speeds: tuple          # left, right; m/s
    torques: tuple = ()
    prev_action: tuple = ()
    action: tuple = ()


def velocity_term(v, v_cmd, c):
    return math.exp(-c * ((v[0] - v_cmd[0]) ** 2 + (v[1] - v_cmd[1]) ** 2))


def action_rate_term(action, prev_action, c):
    s = sum((a - b) ** 2 for a, b in zip(action, prev_action))
    return -min(c * s, 1.0)


def locomotion_terms(state, clock, coeffs=LocomotionCoeffs()):
    """Unweighted value of each locomotion term, each in [-1, 1]."""
    stance = [stance_indicator(clock, "left"), stance_indicator(clock, "right")]
    force, speed = 0.0, 0.0
    for s, f, v in zip(stance, state.foot_forces, state.foot_speeds):
        support = min(max(f, 0.0) / coeffs.force_ref, 1.0)
        force += 0.5 * (s * support + (1.0 - s) * (1.0 - support))
        lift = min(v / coeffs.speed_ref, 1.0)
        speed += 0.5 * (s * math.exp(-(v / coeffs.speed_ref) ** 2) + (1.0 - s) * lift)
    tau2 = sum(t * t for t in state.torques)
    return {
        "foot_force": force,
        "foot_speed": speed,
        "upright": math.exp(-coeffs.orientation * state.orientation_error ** 2),
        "height": math.exp(-coeffs.height * state.height_error ** 2),
        "velocity": velocity_term(state.base_velocity, state.command_velocity, coeffs.velocity),
        "torque": -min(coeffs.torque * tau2, 1.0),
        "action_rate": action_rate_term(state.action, state.prev_action, coeffs.action_rate),
    }


def locomotion_reward(state, clock, weights=None, coeffs=LocomotionCoeffs()):
    """Weighted locomotion reward; returns ``(total, {term: weighted value})``."""
    weights = default_locomotion_weights() if weights is None else weights
    terms = locomotion_terms(state, clock, coeffs)
    per_term = {n: weights.get(n, 0.0) * v for n, v in terms.items()}
    return sum(per_term.values()), per_term


@dataclass
class RewardConfig:
    """Weights and ranges for one environment's reward."""

    w_destination: float = DEFAULT_WEIGHTS[DESTINATION]
    w_obstacle: float = DEFAULT_WEIGHTS[OBSTACLE]
    w_initial: float = DEFAULT_WEIGHTS[INITIAL]
    k_destination: float = DEFAULT_K[DESTINATION]
    k_obstacle: float = DEFAULT_K[OBSTACLE]
    k_initial: float = DEFAULT_K[INITIAL]
    locomotion: dict = field(default_factory=dict)   # term name -> weight override

    def targets(self, destination, obstacles, initial):
        out = [DistanceTarget(tuple(destination), self.k_destination, self.w_destination,
                              DESTINATION, "destination")]
        for i, c in enumerate(obstacles):
            out.append(DistanceTarget(tuple(c), self.k_obstacle, self.w_obstacle,
                                      OBSTACLE, f"obstacle_{i}"))
        out.append(DistanceTarget(tuple(initial), self.k_initial, self.w_initial,
                                  INITIAL, "initial_position"))
        return out
