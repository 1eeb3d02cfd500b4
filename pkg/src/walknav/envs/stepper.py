"""Top-down clocked biped stepper.

Each control step moves one foot: the clock's half-cycle picks the swing foot,
the action places it relative to its old position (in the heading frame) and
turns the heading.  The base is always the midpoint of the feet, so standing
still and stepping in place both leave it where it is.
"""

import math

import numpy as np

from walknav.envs.core import (
    Clock, Env, ObservationLayout, StepResult, clock_advance, clock_features, stance_indicator,
)
from walknav.rewards import (
    action_rate_term, distance_reward, grouped_distance_terms, total_reward,
)

S_MAX = 0.25          # m, swing displacement per unit action
MAX_STRIDE = 0.5      # m, swing foot distance from stance foot
THETA_MAX = 0.3       # rad per step
HALF_WIDTH = 0.1      # m, lateral foot offset at reset
MIN_FOOT_GAP = 0.1    # m, lateral gap below which the feet count as crossing
JITTER = 0.05
GAIT_WEIGHTS = {"regularity": 0.15, "alternation": 0.15, "alignment": 0.15, "action_rate": 0.05}
C_REGULARITY = 20.0   # 1/m^2
C_ALTERNATION = 100.0  # 1/m^2
C_ALIGNMENT = 20.0    # s^2/m^2
C_ACTION_RATE = 0.25


def _rot(theta, x, y):
    c, s = math.cos(theta), math.sin(theta)
    return c * x - s * y, s * x + c * y


class StepperEnv(Env):
    action_dim = 3
    reward_terms = ("gait_regularity", "gait_alternation", "gait_alignment", "gait_action_rate",
                    "dist_destination", "dist_obstacle", "dist_initial_position")

    def __init__(self, layout, reward_config=None, jitter=JITTER, clock=None):
        self.layout = layout
        self.reward_config = reward_config if reward_config is not None else layout.reward_config()
        self.targets = self.reward_config.targets(
            layout.destination, layout.obstacle_centers, layout.initial)
        self.jitter = jitter
        self.clock0 = clock if clock is not None else Clock()
        self.dt = self.clock0.period / 2.0
        xmin, xmax, ymin, ymax = layout.workspace
        self.pos_scale = max(xmax - xmin, ymax - ymin) / 2.0
        n = len(layout.obstacles)
        self.observation_layout = ObservationLayout((
            ("base", 2, self.pos_scale),
            ("heading", 2, 1.0),
            ("feet", 4, MAX_STRIDE),
            ("obstacles", 2 * n, self.pos_scale),
            ("destination", 2, self.pos_scale),
            ("clock", 2, 1.0),
        ))
        self._refs = {
            "obstacles": np.array(layout.obstacle_centers, dtype=np.float64).reshape(-1),
            "destination": np.array(layout.destination, dtype=np.float64),
        }
        self.reset(None)

    # -- state -------------------------------------------------------------
    def _place(self, base, theta):
        nx, ny = -math.sin(theta), math.cos(theta)
        self.left = [base[0] + HALF_WIDTH * nx, base[1] + HALF_WIDTH * ny]
        self.right = [base[0] - HALF_WIDTH * nx, base[1] - HALF_WIDTH * ny]
        self.base = [(self.left[0] + self.right[0]) / 2.0, (self.left[1] + self.right[1]) / 2.0]

    def _obs(self):
        c, s = math.cos(self.theta), math.sin(self.theta)
        feet = []
        for f in (self.left, self.right):
            dx, dy = f[0] - self.base[0], f[1] - self.base[1]
            feet += [c * dx + s * dy, -s * dx + c * dy]
        return self.observation_layout.assemble({
            "base": self.base, "heading": (c, s), "feet": feet,
            "clock": clock_features(self.clock), **self._refs})

    def reset(self, rng=None):
        x, y = self.layout.initial
        if self.jitter > 0 and rng is not None:
            dx, dy = rng.normal(0.0, self.jitter, size=2)
            x, y = x + dx, y + dy
        dest = self.layout.destination
        self.theta = math.atan2(dest[1] - y, dest[0] - x)
        self._place((x, y), self.theta)
        self.clock = self.clock0
        self.steps = 0
        self.prev_action = (0.0, 0.0, 0.0)
        self.prev_length = 0.0
        return StepResult(self._obs(), info={"base_xy": tuple(self.base)})

    def swing_foot(self):
        """'left' or 'right': the foot in swing during the coming half-cycle.

        The control step spans phases [phi, phi + 1/2); the stance windows are
        sampled at its midpoint, away from the ramps at the window edges.
        """
        mid = clock_advance(self.clock, self.dt / 2.0)
        return "right" if stance_indicator(mid, "left") >= 0.5 else "left"

    # -- dynamics ----------------------------------------------------------
    def step(self, action):
        a = self._check_action(action)
        act = (float(a[0]), float(a[1]), float(a[2]))
        swing_name = self.swing_foot()
        swing, stance = (self.left, self.right) if swing_name == "left" else (self.right, self.left)
        old_base = tuple(self.base)

        ddx, ddy = _rot(self.theta, act[0] * S_MAX, act[1] * S_MAX)
        nx, ny = swing[0] + ddx, swing[1] + ddy
        sx, sy = nx - stance[0], ny - stance[1]
        sep = math.hypot(sx, sy)
        if sep > MAX_STRIDE:
            nx, ny = stance[0] + sx * MAX_STRIDE / sep, stance[1] + sy * MAX_STRIDE / sep
        length = math.hypot(nx - swing[0], ny - swing[1])
        swing[0], swing[1] = nx, ny
        self.theta = self.theta + act[2] * THETA_MAX
        self.base = [(self.left[0] + self.right[0]) / 2.0, (self.left[1] + self.right[1]) / 2.0]
        self.clock = clock_advance(self.clock, self.dt)
        self.steps += 1

        # gait terms
        hx, hy = -math.sin(self.theta), math.cos(self.theta)   # left-pointing normal
        gap = (self.left[0] - self.right[0]) * hx + (self.left[1] - self.right[1]) * hy
        lat_v = ((self.base[0] - old_base[0]) * hx + (self.base[1] - old_base[1]) * hy) / self.dt
        gait = {
            "gait_regularity": GAIT_WEIGHTS["regularity"] * math.exp(-C_REGULARITY * (length - self.prev_length) ** 2),
            "gait_alternation": GAIT_WEIGHTS["alternation"] * math.exp(-C_ALTERNATION * max(0.0, MIN_FOOT_GAP - gap) ** 2),
            "gait_alignment": GAIT_WEIGHTS["alignment"] * math.exp(-C_ALIGNMENT * lat_v ** 2),
            "gait_action_rate": GAIT_WEIGHTS["action_rate"] * action_rate_term(act, self.prev_action, C_ACTION_RATE),
        }
        self.prev_action = act
        self.prev_length = length
        bx, by = self.base
        dist, per_target = distance_reward((bx, by), self.targets)
        terms = dict(gait)
        terms.update({k: v for k, v in grouped_distance_terms(per_target, self.targets).items()})
        reward = total_reward(sum(gait.values()), dist)

        dest = self.layout.destination
        d_goal = math.hypot(dest[0] - bx, dest[1] - by)
        collided = any(
            math.hypot(p[0] - x, p[1] - y) < r
            for x, y, r in self.layout.obstacles for p in (self.base, self.left, self.right))
        info = {"terms": terms, "distance_reward": dist, "distance_to_goal": d_goal,
                "base_xy": (bx, by), "collision": collided, "swing_foot": swing_name,
                "step_length": length}
        return self._finish(reward, d_goal <= self.layout.goal_radius, collided, info)

    trajectory_columns = ("step", "base_x", "base_y", "swing_foot", "step_length")

    def trajectory_row(self, res):
        return [self.steps, *res.info["base_xy"], res.info["swing_foot"], res.info["step_length"]]

    def absorbing_reward(self):
        # standing still with feet apart: every gait term at its maximum, no action change
        dist, _ = distance_reward(self.layout.destination, self.targets)
        gait = sum(w for k, w in GAIT_WEIGHTS.items() if k != "action_rate")
        return total_reward(gait, dist)

    def get_state(self):
        return np.array([*self.left, *self.right, self.theta, self.clock.phase, float(self.steps),
                         *self.prev_action, self.prev_length])

    def set_state(self, state):
        s = [float(v) for v in state]
        self.left, self.right = s[0:2], s[2:4]
        self.base = [(self.left[0] + self.right[0]) / 2.0, (self.left[1] + self.right[1]) / 2.0]
        self.theta = s[4]
        self.clock = Clock(phase=s[5], period=self.clock0.period, offsets=self.clock0.offsets,
                           duty=self.clock0.duty, ramp=self.clock0.ramp)
        self.steps = int(s[6])
        self.prev_action = tuple(s[7:10])
        self.prev_length = s[10]
