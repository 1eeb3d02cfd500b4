"""Sagittal-plane biped walking toward a goal on the +x axis.

The policy outputs offsets to the default crouch posture; PD
controllers turn the joint targets into torques at the physics rate.
"""

import math
import os
from dataclasses import dataclass, fields
from importlib import resources

import numpy as np

from walknav.envs import biped_dynamics as dyn
from walknav.envs.core import (
    Clock, Env, ObservationLayout, StepResult, clock_advance, clock_features,
    REASON_DIVERGED, REASON_FALL, REASON_TIMEOUT,
)
from walknav.rewards import (
    DistanceTarget, LocomotionState, RewardConfig, default_locomotion_weights, distance_reward,
    locomotion_reward, total_reward,
)

GOAL_DISTANCE = 5.0     # m ahead of the start
V_COMMAND = 0.5         # m/s
PITCH_LIMIT = 1.0       # rad
HEIGHT_FRACTION = 0.5   # of the standing hip height
JITTER = 0.01           # rad, joint-angle noise at reset


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class BipedModel:
    m_torso: float = 30.0
    l_torso: float = 0.6
    m_thigh: float = 5.0
    l_thigh: float = 0.4
    m_shank: float = 3.0
    l_shank: float = 0.4
    g: float = 9.81
    k_ground: float = 1e5
    c_ground: float = 1000.0
    mu: float = 0.8
    kp_hip: float = 300.0
    kd_hip: float = 10.0
    kp_knee: float = 300.0
    kd_knee: float = 10.0
    tau_max: float = 100.0
    hip_height: float = 0.74    # m, crouched standing height of the hip
    foot_spread: float = 0.15   # m, each foot's x offset from the hip (left ahead)
    delta_max: float = 0.6      # rad, joint target range per unit action
    dt_physics: float = 1e-3
    substeps: int = 20

    def __post_init__(self):
        for name in ("m_torso", "l_torso", "m_thigh", "l_thigh", "m_shank", "l_shank",
                     "k_ground", "hip_height", "dt_physics"):
            if not getattr(self, name) > 0:
                raise ModelError(f"{name} must be positive")
        for name in ("c_ground", "mu", "kp_hip", "kd_hip", "kp_knee", "kd_knee", "tau_max", "g"):
            if getattr(self, name) < 0:
                raise ModelError(f"{name} must be non-negative")
        if self.substeps < 1:
            raise ModelError("substeps must be at least 1")
        reach = self.l_thigh + self.l_shank
        if math.hypot(self.foot_spread, self.hip_height) >= reach:
            raise ModelError("default posture is out of the legs' reach")
        q = self.default_q()
        pos, _, _ = dyn.kinematics(q, np.zeros(dyn.NQ), self.params())
        if abs(pos[dyn.FOOT_L, 1]) > 1e-9 or abs(pos[dyn.FOOT_R, 1]) > 1e-9:
            raise ModelError("default posture does not put both feet on the ground")

    @property
    def control_dt(self):
        return self.dt_physics * self.substeps

    def params(self):
        P = np.zeros(dyn.N_PARAMS)
        P[dyn.P_M_TORSO], P[dyn.P_L_TORSO] = self.m_torso, self.l_torso
        P[dyn.P_M_THIGH], P[dyn.P_L_THIGH] = self.m_thigh, self.l_thigh
        P[dyn.P_M_SHANK], P[dyn.P_L_SHANK] = self.m_shank, self.l_shank
        P[dyn.P_G] = self.g
        P[dyn.P_K_GROUND], P[dyn.P_C_GROUND], P[dyn.P_MU] = self.k_ground, self.c_ground, self.mu
        P[dyn.P_KP_HIP], P[dyn.P_KD_HIP] = self.kp_hip, self.kd_hip
        P[dyn.P_KP_KNEE], P[dyn.P_KD_KNEE] = self.kp_knee, self.kd_knee
        P[dyn.P_TAU_MAX] = self.tau_max
        return P

    def default_joints(self):
        """(hip_l, knee_l, hip_r, knee_r) with feet at +-foot_spread, knees forward."""
        out = []
        for dx in (self.foot_spread, -self.foot_spread):
            d = math.hypot(dx, self.hip_height)
            line = math.atan2(dx, self.hip_height)
            l1, l2 = self.l_thigh, self.l_shank
            thigh_off = math.acos((l1 * l1 + d * d - l2 * l2) / (2 * l1 * d))
            shank_off = math.acos((l2 * l2 + d * d - l1 * l1) / (2 * l2 * d))
            # leg angles grow backward, so a forward knee has a negative thigh angle
            out += [-line - thigh_off, thigh_off + shank_off]
        return tuple(out)

    def default_q(self):
        return np.array([0.0, self.hip_height, 0.0, *self.default_joints()])


def format_model(model):
    return "".join(f"{f.name} = {getattr(model, f.name)!r}\n" for f in fields(model))


def parse_model(text):
    kinds = {f.name: f.type for f in fields(BipedModel)}
    kw = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ModelError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ModelError(f"line {lineno}: unknown model key {key!r}")
        if key in kw:
            raise ModelError(f"line {lineno}: duplicate key {key!r}")
        try:
            kw[key] = int(value) if kinds[key] in (int, "int") else float(value)
        except ValueError as exc:
            raise ModelError(f"line {lineno}: {exc}") from None
    return BipedModel(**kw)


def load_model(path):
    with open(path) as fh:
        return parse_model(fh.read())


def resolve_model(spec):
    """BipedModel from None (defaults), a model file path or a shipped model name."""
    if spec is None or isinstance(spec, BipedModel):
        return spec if spec is not None else BipedModel()
    if os.path.exists(spec):
        return load_model(spec)
    path = str(resources.files("walknav") / "data" / f"{spec}.model")
    if os.path.exists(path):
        return load_model(path)
    raise FileNotFoundError(f"no model file or shipped model named {spec!r}")


def apply_action(action, model):
    """Joint targets: the default posture offset by ``action * delta_max``."""
    return np.asarray(model.default_joints()) + np.asarray(action, dtype=np.float64) * model.delta_max


class BipedEnv(Env):
    action_dim = 4
    reward_terms = ("loco_foot_force", "loco_foot_speed", "loco_upright", "loco_height",
                    "loco_velocity", "loco_torque", "loco_action_rate", "dist_destination")
    trajectory_columns = ("t", *(f"q{i}" for i in range(7)), *(f"qd{i}" for i in range(7)),
                          "fn_left", "ft_left", "fn_right", "ft_right")

    def __init__(self, model=None, reward_config=None, jitter=JITTER, clock=None):
        self.model = model if model is not None else BipedModel()
        self.reward_config = reward_config if reward_config is not None else RewardConfig()
        self.jitter = jitter
        self.clock0 = clock if clock is not None else Clock()
        self.P = self.model.params()
        self.observation_layout = ObservationLayout((
            ("joint_pos", 4, math.pi),
            ("joint_vel", 4, 10.0),
            ("pitch", 1, math.pi),
            ("pitch_rate", 1, 5.0),
            ("goal_dx", 1, GOAL_DISTANCE),
            ("clock", 2, 1.0),
        ))
        self.aux = np.zeros(dyn.N_AUX)
        self.reset(None)

    def _obs(self):
        q, qd = self.q, self.qd
        return self.observation_layout.assemble({
            "joint_pos": q[3:], "joint_vel": qd[3:], "pitch": q[2], "pitch_rate": qd[2],
            "goal_dx": self.goal_x - q[0], "clock": clock_features(self.clock)})

    def reset(self, rng=None):
        self.q = self.model.default_q()
        if self.jitter > 0 and rng is not None:
            self.q[3:] += rng.normal(0.0, self.jitter, size=4)
            # keep the lower foot on the ground
            pos, _, _ = dyn.kinematics(self.q, np.zeros(dyn.NQ), self.P)
            self.q[1] -= min(pos[dyn.FOOT_L, 1], pos[dyn.FOOT_R, 1])
        self.qd = np.zeros(dyn.NQ)
        pos, _, _ = dyn.kinematics(self.q, self.qd, self.P)
        self.anchor = np.array([pos[dyn.FOOT_L, 0], pos[dyn.FOOT_R, 0]])
        self.aux[:] = 0.0
        self.x0 = float(self.q[0])
        self.goal_x = self.x0 + GOAL_DISTANCE
        self.targets = [DistanceTarget((self.goal_x, 0.0), self.reward_config.k_destination,
                                       self.reward_config.w_destination, "destination", "destination")]
        self.clock = self.clock0
        self.steps = 0
        self.prev_action = (0.0,) * 4
        return StepResult(self._obs(), info={"base_xy": (self.x0, 0.0)})

    def foot_state(self):
        """Foot positions (2, 2) and velocities (2, 2), left then right."""
        pos, J, _ = dyn.kinematics(self.q, self.qd, self.P)
        feet = pos[dyn.FOOT_L:dyn.FOOT_R + 1]
        vel = np.einsum("fij,j->fi", J[dyn.FOOT_L:dyn.FOOT_R + 1], self.qd)
        return feet, vel

    def step(self, action):
        a = self._check_action(action)
        target = apply_action(a, self.model)
        ok = dyn.simulate(self.q, self.qd, self.anchor, target, self.P,
                          self.model.substeps, self.model.dt_physics, self.aux)
        self.clock = clock_advance(self.clock, self.model.control_dt)
        self.steps += 1
        act = tuple(float(v) for v in a)
        if not ok:
            self.prev_action = act
            info = {"reason": REASON_DIVERGED, "terms": {n: 0.0 for n in self.reward_terms},
                    "base_xy": (math.nan, 0.0), "distance_to_goal": math.nan}
            self.q = np.nan_to_num(self.q)
            self.qd = np.zeros(dyn.NQ)
            return StepResult(self._obs(), 0.0, True, False, info)

        _, foot_vel = self.foot_state()
        x, z, pitch = self.q[0], self.q[1], self.q[2]
        d_goal = abs(self.goal_x - x)
        v_cmd = math.copysign(min(V_COMMAND, d_goal), self.goal_x - x)
        loco = LocomotionState(
            orientation_error=pitch,
            height_error=z - self.model.hip_height,
            base_velocity=(self.qd[0], 0.0),
            command_velocity=(v_cmd, 0.0),
            foot_forces=(self.aux[dyn.AUX_FN_L], self.aux[dyn.AUX_FN_R]),
            foot_speeds=(float(np.hypot(*foot_vel[0])), float(np.hypot(*foot_vel[1]))),
            torques=tuple(self.aux[dyn.AUX_TAU:dyn.AUX_TAU + 4]),
            prev_action=self.prev_action,
            action=act,
        )
        self.prev_action = act
        weights = {**default_locomotion_weights(), **self.reward_config.locomotion}
        loco_total, loco_terms = locomotion_reward(loco, self.clock, weights)
        dist, _ = distance_reward((x, 0.0), self.targets)
        terms = {f"loco_{k}": v for k, v in loco_terms.items()}
        terms["dist_destination"] = dist
        reward = total_reward(loco_total, dist)
        info = {"terms": terms, "distance_reward": dist, "distance_to_goal": d_goal,
                "base_xy": (float(x), 0.0), "contact": self.aux[:4].copy(),
                "forward_displacement": float(x - self.x0)}

        terminated = truncated = False
        if z < HEIGHT_FRACTION * self.model.hip_height or abs(pitch) > PITCH_LIMIT:
            terminated, info["reason"] = True, REASON_FALL
        elif self.steps >= self.max_steps:
            truncated, info["reason"] = True, REASON_TIMEOUT
        return StepResult(self._obs(), reward, terminated, truncated, info)

    def trajectory_row(self, res=None):
        return [self.steps * self.model.control_dt, *self.q, *self.qd, *self.aux[:4]]

    def get_state(self):
        return np.array([*self.q, *self.qd, *self.anchor, self.clock.phase, float(self.steps),
                         *self.prev_action, self.x0])

    def set_state(self, state):
        s = np.asarray(state, dtype=np.float64)
        self.q, self.qd, self.anchor = s[0:7].copy(), s[7:14].copy(), s[14:16].copy()
        self.clock = Clock(phase=float(s[16]), period=self.clock0.period, offsets=self.clock0.offsets,
                           duty=self.clock0.duty, ramp=self.clock0.ramp)
        self.steps = int(s[17])
        self.prev_action = tuple(float(v) for v in s[18:22])
        self.x0 = float(s[22])
        self.goal_x = self.x0 + GOAL_DISTANCE
        self.targets = [DistanceTarget((self.goal_x, 0.0), self.reward_config.k_destination,
                                       self.reward_config.w_destination, "destination", "destination")]
