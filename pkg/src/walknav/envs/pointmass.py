"""2-D double-integrator navigation among circular obstacles."""

import math

import numpy as np

from walknav.envs.core import Env, ObservationLayout, StepResult
from walknav.rewards import (
    action_rate_term, distance_reward, grouped_distance_terms, total_reward, velocity_term,
)

DT = 0.05
A_MAX = 2.0
V_MAX = 1.5
V_NOMINAL = 1.0
APPROACH_TIME = 1.0   # s; commanded speed tapers to zero inside V_NOMINAL * APPROACH_TIME
JITTER = 0.05
W_VELOCITY = 0.15
W_ACTION_RATE = 0.05
C_VELOCITY = 2.0
C_ACTION_RATE = 0.25


class PointMassEnv(Env):
    action_dim = 2
    reward_terms = ("loco_velocity", "loco_action_rate",
                    "dist_destination", "dist_obstacle", "dist_initial_position")

    def __init__(self, layout, reward_config=None, jitter=JITTER):
        self.layout = layout
        self.reward_config = reward_config if reward_config is not None else layout.reward_config()
        self.targets = self.reward_config.targets(
            layout.destination, layout.obstacle_centers, layout.initial)
        self.jitter = jitter
        xmin, xmax, ymin, ymax = layout.workspace
        self.pos_scale = max(xmax - xmin, ymax - ymin) / 2.0
        n = len(layout.obstacles)
        self.observation_layout = ObservationLayout((
            ("position", 2, self.pos_scale),
            ("velocity", 2, V_MAX),
            ("obstacles", 2 * n, self.pos_scale),
            ("destination", 2, self.pos_scale),
        ))
        self._refs = {
            "obstacles": np.array(layout.obstacle_centers, dtype=np.float64).reshape(-1),
            "destination": np.array(layout.destination, dtype=np.float64),
        }
        self.pos = list(layout.initial)
        self.vel = [0.0, 0.0]
        self.steps = 0
        self.prev_action = (0.0, 0.0)

    def _obs(self):
        return self.observation_layout.assemble(
            {"position": self.pos, "velocity": self.vel, **self._refs})

    def reset(self, rng=None):
        x, y = self.layout.initial
        if self.jitter > 0 and rng is not None:
            dx, dy = rng.normal(0.0, self.jitter, size=2)
            x, y = x + dx, y + dy
        self.pos = [float(x), float(y)]
        self.vel = [0.0, 0.0]
        self.steps = 0
        self.prev_action = (0.0, 0.0)
        return StepResult(self._obs(), info={"base_xy": tuple(self.pos)})

    def step(self, action):
        a = self._check_action(action)
        ax, ay = float(a[0]) * A_MAX, float(a[1]) * A_MAX
        vx, vy = self.vel[0] + ax * DT, self.vel[1] + ay * DT
        speed = math.hypot(vx, vy)
        if speed > V_MAX:
            vx, vy = vx * V_MAX / speed, vy * V_MAX / speed
        px, py = self.pos[0] + vx * DT, self.pos[1] + vy * DT
        xmin, xmax, ymin, ymax = self.layout.workspace
        if not xmin <= px <= xmax:
            px, vx = min(max(px, xmin), xmax), 0.0
        if not ymin <= py <= ymax:
            py, vy = min(max(py, ymin), ymax), 0.0
        self.pos, self.vel = [px, py], [vx, vy]
        self.steps += 1

        dest = self.layout.destination
        gx, gy = dest[0] - px, dest[1] - py
        d_goal = math.hypot(gx, gy)
        gain = min(V_NOMINAL / d_goal, 1.0 / APPROACH_TIME) if d_goal > 0 else 0.0
        v_cmd = (gain * gx, gain * gy)
        act = (float(a[0]), float(a[1]))
        terms = {
            "loco_velocity": W_VELOCITY * velocity_term((vx, vy), v_cmd, C_VELOCITY),
            "loco_action_rate": W_ACTION_RATE * action_rate_term(act, self.prev_action, C_ACTION_RATE),
        }
        self.prev_action = act
        dist, per_target = distance_reward((px, py), self.targets)
        grouped = grouped_distance_terms(per_target, self.targets)
        terms["dist_destination"] = grouped["dist_destination"]
        terms["dist_obstacle"] = grouped["dist_obstacle"]
        terms["dist_initial_position"] = grouped["dist_initial_position"]
        reward = total_reward(terms["loco_velocity"] + terms["loco_action_rate"], dist)

        collided = any(math.hypot(px - x, py - y) < r for x, y, r in self.layout.obstacles)
        info = {"terms": terms, "distance_reward": dist, "distance_to_goal": d_goal,
                "base_xy": (px, py), "collision": collided}
        return self._finish(reward, d_goal <= self.layout.goal_radius, collided, info)

    trajectory_columns = ("step", "x", "y", "vx", "vy")

    def trajectory_row(self, res):
        return [self.steps, *self.pos, *self.vel]

    def absorbing_reward(self):
        # at rest on the destination: velocity command and action change are both zero
        dist, _ = distance_reward(self.layout.destination, self.targets)
        return total_reward(W_VELOCITY, dist)

    def get_state(self):
        return np.array([*self.pos, *self.vel, float(self.steps), *self.prev_action])

    def set_state(self, state):
        s = [float(v) for v in state]
        self.pos, self.vel = s[0:2], s[2:4]
        self.steps = int(s[4])
        self.prev_action = (s[5], s[6])
