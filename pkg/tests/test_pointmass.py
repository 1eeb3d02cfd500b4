import math

import numpy as np
import pytest

from walknav.envs import builtin_layout_path, make_env, resolve_layout
from walknav.envs.core import ActionError
from walknav.envs.layout import (
    EnvironmentLayout, LayoutError, format_layout, load_layout, parse_layout,
)
from walknav.envs.pointmass import DT, V_MAX, PointMassEnv
from walknav.rewards import distance_reward

OPEN = EnvironmentLayout(obstacles=((2.0, 1.0, 0.3),), destination=(5.0, 0.0), initial=(0.0, 0.0))


def env_at(pos, vel=(0.0, 0.0), layout=OPEN):
    env = PointMassEnv(layout, jitter=0.0)
    env.reset(None)
    env.set_state([*pos, *vel, 0, 0.0, 0.0])
    return env


def test_obs_dimension_and_reset_position():
    lay = resolve_layout("course4")
    env = PointMassEnv(lay, jitter=0.0)
    res = env.reset(np.random.default_rng(0))
    assert res.obs.shape == (4 + 2 * len(lay.obstacles) + 2,)
    assert env.observation_layout.dim == res.obs.size
    assert env.pos == list(lay.initial)
    assert np.array_equal(res.obs[:2] * env.pos_scale, np.array(lay.initial))


def test_jittered_reset_is_seeded():
    env = PointMassEnv(OPEN)
    a = env.reset(np.random.default_rng(3)).obs
    b = env.reset(np.random.default_rng(3)).obs
    c = env.reset(np.random.default_rng(4)).obs
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_zero_action_from_rest_stays_put():
    env = env_at((1.0, -1.0))
    for _ in range(10):
        env.step([0.0, 0.0])
    assert env.pos == [1.0, -1.0]


def test_semi_implicit_integration():
    env = env_at((0.5, 0.5), vel=(1.0, 0.0))
    env.step([0.0, 0.0])
    assert env.pos[0] == pytest.approx(0.5 + 0.05, abs=1e-15)
    assert env.pos[1] == 0.5
    # acceleration acts on velocity before position
    env = env_at((0.5, 0.5))
    env.step([0.5, 0.0])
    assert env.vel[0] == pytest.approx(0.5 * 2.0 * DT)
    assert env.pos[0] == pytest.approx(0.5 + env.vel[0] * DT)


def test_velocity_clamp_holds():
    env = env_at((0.0, -2.0))
    for _ in range(200):
        res = env.step([1.0, 0.3])
        assert math.hypot(*env.vel) <= V_MAX + 1e-12
        if res.done:
            break


def test_boundary_is_not_a_collision():
    # exactly on the circle: strict inequality says no collision
    env = env_at((2.0, 0.7))
    res = env.step([0.0, 0.0])
    assert not res.info["collision"] and not res.terminated
    env = env_at((2.0, 0.71))
    res = env.step([0.0, 0.0])
    assert res.terminated and res.info["reason"] == "collision"


def test_goal_terminates_and_takes_precedence():
    lay = EnvironmentLayout(obstacles=((2.0, 0.0, 0.3),), destination=(5.0, 0.0),
                            goal_radius=0.6, initial=(0.0, 0.0))
    # valid layouts keep obstacles off the goal disk, so force an overlap
    object.__setattr__(lay, "obstacles", ((5.0, 0.9, 0.35),))
    env = env_at((5.0, 0.58), layout=lay)
    res = env.step([0.0, 0.0])
    assert res.info["collision"]
    assert res.terminated and res.info["reason"] == "goal"
    assert res.info["absorbing_reward"] == pytest.approx(env.absorbing_reward())


def test_truncates_at_400():
    env = env_at((-1.0, 2.5), layout=OPEN)
    for t in range(1, 401):
        res = env.step([0.0, 0.0])
        if t < 400:
            assert not res.done
    assert res.truncated and not res.terminated and res.info["reason"] == "timeout"


def test_distance_reward_consistency():
    lay = resolve_layout("course4")
    env = PointMassEnv(lay)
    env.reset(np.random.default_rng(2))
    rng = np.random.default_rng(5)
    for _ in range(100):
        res = env.step(rng.uniform(-1, 1, size=2))
        want, _ = distance_reward(tuple(env.pos), env.targets)
        assert abs(res.info["distance_reward"] - want) < 1e-12
        assert abs(sum(res.info["terms"].values()) - res.reward) < 1e-12
        if res.done:
            env.reset(rng)


def test_rejects_non_finite_action():
    env = env_at((0.0, 0.0))
    with pytest.raises(ActionError):
        env.step([np.nan, 0.0])
    with pytest.raises(ActionError):
        env.step([0.0])


def test_absorbing_reward_is_rest_reward_at_goal():
    env = env_at(OPEN.destination)
    res = env.step([0.0, 0.0])
    assert res.reward == pytest.approx(env.absorbing_reward(), abs=1e-12)


def test_state_roundtrip():
    env = PointMassEnv(resolve_layout("course4"))
    env.reset(np.random.default_rng(0))
    for a in ([1, 0.2], [0.3, -0.5], [0, 1]):
        env.step(a)
    s = env.get_state()
    other = PointMassEnv(resolve_layout("course4"))
    other.set_state(s)
    assert np.array_equal(other.get_state(), s)
    assert np.array_equal(other.step([0.1, 0.1]).obs, env.step([0.1, 0.1]).obs)


# -- layout files ------------------------------------------------------------

def test_layout_roundtrip_is_bit_exact():
    lay = EnvironmentLayout(obstacles=((1.1, 0.1 + 0.2, 0.3), (2.0 / 3.0, -1.0, 1e-3)),
                            destination=(math.pi, 0.0), goal_radius=0.25,
                            initial=(0.0, 0.1)).with_overrides(w_obstacle=-0.7, k_destination=0.31)
    again = parse_layout(format_layout(lay))
    assert again == lay
    assert format_layout(again) == format_layout(lay)


def test_shipped_layouts_parse():
    for name in ("course4", "open", "corridor"):
        lay = load_layout(builtin_layout_path(name))
        assert len(lay.obstacles) >= 1
        make_env("pointmass", lay)


@pytest.mark.parametrize("text,msg", [
    ("obstacle = 1,2\n", "line 1"),
    ("initial = 0,0\nbogus = 3\n", "line 2"),
    ("initial = 0,0\ndestination = 5,0,0.3\nobstacle = 0.1,0,0.3\n", "initial"),
    ("destination = 5,0,0.3\nobstacle = 5.3,0,0.3\n", "goal"),
    ("obstacle = 1,1,-0.2\n", "radius"),
    ("destination = 50,0,0.3\n", "workspace"),
])
def test_layout_errors(text, msg):
    with pytest.raises(LayoutError, match=msg):
        parse_layout(text)


def test_overrides_feed_reward_config():
    lay = parse_layout("obstacle = 2,1,0.3\nw_obstacle = -1.0\nk_destination = 0.5\n")
    cfg = lay.reward_config()
    assert cfg.w_obstacle == -1.0 and cfg.k_destination == 0.5
    env = PointMassEnv(lay)
    assert [t.weight for t in env.targets if t.kind == "obstacle"] == [-1.0]
