import math

import numpy as np
import pytest

from walknav.envs import biped_dynamics as dyn
from walknav.envs.biped import (
    BipedEnv, BipedModel, ModelError, apply_action, format_model, parse_model,
)

MODEL = BipedModel()
P = MODEL.params()


def airborne(qd_joints=(2.0, -1.5, -1.0, 2.5), pitch_rate=0.8):
    q = MODEL.default_q()
    q[1] = 1.2   # feet 0.46 m above the ground
    qd = np.zeros(dyn.NQ)
    qd[0], qd[1], qd[2] = 0.3, 0.5, pitch_rate
    qd[3:] = qd_joints
    return q, qd


def passive(P_):
    out = P_.copy()
    out[[dyn.P_KP_HIP, dyn.P_KD_HIP, dyn.P_KP_KNEE, dyn.P_KD_KNEE]] = 0.0
    return out


# -- PD law ------------------------------------------------------------------

def test_pd_torque_examples():
    p = P.copy()
    p[dyn.P_KP_HIP] = p[dyn.P_KP_KNEE] = 50.0
    p[dyn.P_KD_HIP] = p[dyn.P_KD_KNEE] = 2.0
    q, qd = np.zeros(dyn.NQ), np.zeros(dyn.NQ)
    assert np.array_equal(dyn.pd_torque(np.zeros(4), q, qd, p), np.zeros(4))
    tau = dyn.pd_torque(np.array([0.1, -0.1, 0.0, 0.0]), q, qd, p)
    assert tau == pytest.approx([5.0, -5.0, 0.0, 0.0], abs=1e-12)
    qd[3] = 1.0
    assert dyn.pd_torque(np.zeros(4), q, qd, p)[0] == pytest.approx(-2.0)
    big = dyn.pd_torque(np.array([10.0, -10.0, 0.0, 0.0]), q, np.zeros(dyn.NQ), p)
    assert big[:2] == pytest.approx([p[dyn.P_TAU_MAX], -p[dyn.P_TAU_MAX]])


def test_apply_action_offsets_default_posture():
    assert np.array_equal(apply_action(np.zeros(4), MODEL), np.asarray(MODEL.default_joints()))
    a = np.array([1.0, -0.5, 0.0, 0.25])
    assert apply_action(a, MODEL) - np.asarray(MODEL.default_joints()) == pytest.approx(a * MODEL.delta_max)


# -- physics -----------------------------------------------------------------

def test_free_fall_com_acceleration_is_minus_g():
    q, qd = airborne()
    qdd, f = dyn.accelerations(q, qd, np.zeros(4), np.zeros(2), P)
    assert np.array_equal(f, np.zeros((2, 2)))
    _, _, acc = dyn.com_state(q, qd, qdd, P)
    assert abs(acc[0]) < 1e-9
    assert abs(acc[1] + MODEL.g) < 1e-9


def test_internal_torque_does_not_move_com():
    q, qd = airborne()
    p = P.copy()
    p[dyn.P_G] = 0.0
    qdd, _ = dyn.accelerations(q, qd, np.array([20.0, -10.0, 5.0, 30.0]), np.zeros(2), p)
    _, _, acc = dyn.com_state(q, qd, qdd, p)
    assert np.max(np.abs(acc)) < 1e-9


def energy_drift(dt):
    q, qd = airborne()
    p = passive(P)
    anchor = np.zeros(2)
    e0 = dyn.mechanical_energy(q, qd, p)
    for _ in range(int(round(0.1 / dt))):
        f = dyn.physics_substep(q, qd, np.zeros(4), anchor, p, dt)
        assert not f.any()
    return abs(dyn.mechanical_energy(q, qd, p) - e0) / abs(e0)


def test_passive_swing_energy_drift():
    d1, d2 = energy_drift(1e-3), energy_drift(5e-4)
    assert d1 < 0.005
    # first-order integrator: halving dt roughly halves the drift
    assert 0.3 < d2 / d1 < 0.7


def test_contact_force_zero_above_ground():
    pos = np.array([[0.1, 1e-6], [-0.1, 0.3]])
    vel = np.array([[0.0, -5.0], [1.0, -1.0]])
    anchor = np.array([0.0, 0.0])
    f = dyn.contact_forces(pos, vel, anchor, P)
    assert np.array_equal(f, np.zeros((2, 2)))
    # anchors follow airborne feet
    assert np.array_equal(anchor, pos[:, 0])


def test_contact_force_normal_and_cone():
    pos = np.array([[0.0, -0.01], [0.5, -0.002]])
    vel = np.array([[0.0, 0.0], [3.0, 0.0]])
    anchor = np.array([0.0, 0.0])
    f = dyn.contact_forces(pos, vel, anchor, P)
    assert f[0, 1] == pytest.approx(MODEL.k_ground * 0.01)
    assert f[0, 0] == 0.0
    # right foot far from its anchor and moving: friction saturates and the anchor slides
    assert f[1, 0] == pytest.approx(-MODEL.mu * f[1, 1])
    assert anchor[1] == pytest.approx(pos[1, 0] + f[1, 0] / MODEL.k_ground)


def test_contact_invariants_during_random_play():
    env = BipedEnv()
    rng = np.random.default_rng(0)
    env.reset(rng)
    for _ in range(300):
        res = env.step(rng.uniform(-1, 1, size=4))
        assert env.aux[dyn.AUX_MIN_NORMAL] >= 0.0
        assert env.aux[dyn.AUX_CONE_EXCESS] <= 1e-9
        if res.done:
            env.reset(rng)


def test_cholesky_solve_matches_numpy():
    M = dyn.mass_matrix(airborne()[0], P)
    b = np.arange(1.0, 8.0)
    assert dyn.cholesky_solve(M, b) == pytest.approx(np.linalg.solve(M, b), rel=1e-10)
    assert np.allclose(M, M.T)


def test_compiled_and_python_kernels_agree():
    q, qd = MODEL.default_q(), np.zeros(dyn.NQ)
    anchor = np.array([MODEL.foot_spread, -MODEL.foot_spread])
    target = apply_action(np.array([0.5, -0.3, -0.2, 0.4]), MODEL)
    runs = []
    for fn in (dyn.simulate, dyn.simulate.py_func):
        qq, vv, aa, aux = q.copy(), qd.copy(), anchor.copy(), np.zeros(dyn.N_AUX)
        for _ in range(5):
            assert fn(qq, vv, aa, target, P, MODEL.substeps, MODEL.dt_physics, aux)
        runs.append(np.concatenate([qq, vv, aa, aux]))
    assert runs[0] == pytest.approx(runs[1], rel=1e-9, abs=1e-9)


# -- environment -------------------------------------------------------------

def test_default_posture_has_feet_on_ground():
    pos, _, _ = dyn.kinematics(MODEL.default_q(), np.zeros(dyn.NQ), P)
    assert pos[dyn.FOOT_L] == pytest.approx([MODEL.foot_spread, 0.0], abs=1e-12)
    assert pos[dyn.FOOT_R] == pytest.approx([-MODEL.foot_spread, 0.0], abs=1e-12)
    # knees point forward of the hip-foot line
    assert pos[2, 0] > pos[dyn.FOOT_L, 0] / 2 and pos[4, 0] > pos[dyn.FOOT_R, 0] / 2


def test_zero_action_standing_survives_400_steps():
    for seed in range(3):
        env = BipedEnv()
        env.reset(np.random.default_rng(seed))
        for t in range(400):
            res = env.step(np.zeros(4))
            assert res.done == (t == 399), f"seed {seed} ended at step {t}: {res.info.get('reason')}"
        assert res.info["reason"] == "timeout"


def test_observation_layout():
    env = BipedEnv()
    res = env.reset(np.random.default_rng(1))
    assert res.obs.shape == (13,) and env.observation_layout.dim == 13
    assert res.obs[10] == pytest.approx(1.0)   # goal 5 m ahead, scaled by 5


def test_pitch_beyond_limit_is_a_fall():
    env = BipedEnv(jitter=0.0)
    q = MODEL.default_q()
    q[2] = 1.05
    env.q = q
    res = env.step(np.zeros(4))
    assert res.terminated and res.info["reason"] == "fell"


def test_reward_terms_sum():
    env = BipedEnv()
    rng = np.random.default_rng(3)
    env.reset(rng)
    for _ in range(50):
        res = env.step(rng.uniform(-1, 1, size=4))
        assert sum(res.info["terms"].values()) == pytest.approx(res.reward, abs=1e-12)
        assert set(res.info["terms"]) == set(env.reward_terms)
        if res.done:
            break


def test_seeded_episode_is_deterministic():
    def rollout():
        env = BipedEnv()
        rng = np.random.default_rng(11)
        env.reset(rng)
        return np.array([env.step(rng.uniform(-1, 1, size=4)).obs for _ in range(30)])
    assert np.array_equal(rollout(), rollout())


def test_state_roundtrip():
    env = BipedEnv()
    rng = np.random.default_rng(5)
    env.reset(rng)
    for _ in range(7):
        env.step(rng.uniform(-0.5, 0.5, size=4))
    other = BipedEnv()
    other.set_state(env.get_state())
    assert np.array_equal(other.get_state(), env.get_state())
    a = np.array([0.1, -0.2, 0.3, 0.0])
    r1, r2 = env.step(a), other.step(a)
    assert np.array_equal(r1.obs, r2.obs) and r1.reward == r2.reward


# -- model files ---------------------------------------------------------------

def test_model_roundtrip():
    m = BipedModel(m_torso=1.0 / 3.0 * 90, kp_hip=123.456, substeps=10)
    again = parse_model(format_model(m))
    assert again == m
    assert format_model(again) == format_model(m)


@pytest.mark.parametrize("text,msg", [
    ("m_torso = -1\n", "positive"),
    ("kp_hip = 1\nbogus = 2\n", "line 2"),
    ("kp_hip = 1\nkp_hip = 2\n", "duplicate"),
    ("kp_hip\n", "line 1"),
    ("hip_height = 0.9\n", "reach"),
])
def test_model_errors(text, msg):
    with pytest.raises(ModelError, match=msg):
        parse_model(text)


def test_crouch_is_verified_numerically():
    m = BipedModel(foot_spread=0.0, hip_height=0.6)
    pos, _, _ = dyn.kinematics(m.default_q(), np.zeros(dyn.NQ), m.params())
    assert math.isclose(pos[dyn.FOOT_L, 1], 0.0, abs_tol=1e-12)


def test_disable_flag_selects_python_fallback():
    import json
    import os
    import subprocess
    import sys
    code = ("import json, numpy as np\n"
            "from walknav._accel import NUMBA_ENABLED\n"
            "from walknav.envs.biped import BipedEnv\n"
            "env = BipedEnv(); rng = np.random.default_rng(2); env.reset(rng)\n"
            "for _ in range(3): env.step(rng.uniform(-1, 1, size=4))\n"
            "print(json.dumps({'numba': NUMBA_ENABLED, 'q': list(env.q)}))\n")
    env = dict(os.environ, WALKNAV_DISABLE_NUMBA="1")
    out = json.loads(subprocess.run([sys.executable, "-c", code], env=env, check=True,
                                    capture_output=True, text=True).stdout)
    assert out["numba"] is False
    here = BipedEnv()
    rng = np.random.default_rng(2)
    here.reset(rng)
    for _ in range(3):
        here.step(rng.uniform(-1, 1, size=4))
    assert np.allclose(out["q"], here.q, rtol=1e-9, atol=1e-9)
