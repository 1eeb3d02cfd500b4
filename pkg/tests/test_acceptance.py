"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Trained checkpoints are cached under ``.acceptance_cache`` (override with
``WALKNAV_ACCEPTANCE_CACHE``), keyed by the run config and a hash of the
package sources, so a code change retrains.  A cold run trains 13 policies
and takes about half an hour on one CPU core.
"""

import hashlib
import json
import math
import os
import time

import numpy as np
import pytest

from walknav.envs import biped_dynamics as dyn
from walknav.envs.biped import BipedEnv, BipedModel
from walknav.harness.config import ExperimentConfig, load_config
from walknav.harness.evaluate import (
    SWEEP_COLUMNS, SweepGrid, evaluate, load_checkpoint_policy, random_baseline, robustness_sweep,
)
from walknav.harness.train import train
from walknav.nnet import MlpSpec, ParameterSet, backward, forward, init_params
from walknav.ppo import RolloutBuffer, Transition, compute_gae
from walknav.rewards import DistanceTarget, RewardConfig, distance_reward

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SRC = os.path.join(ROOT, "src", "walknav")
CACHE = os.environ.get("WALKNAV_ACCEPTANCE_CACHE", os.path.join(ROOT, ".acceptance_cache"))
SEEDS = (0, 1, 2)


def verdict(name, ok, detail):
    line = f"ACCEPTANCE {'PASS' if ok else 'FAIL'} | {name} | {detail}"
    with open(os.path.join(CACHE, "verdicts.txt"), "a") as fh:
        fh.write(line + "\n")
    print("\n" + line)
    assert ok, line


@pytest.fixture(autouse=True)
def _show_verdicts(capsys):
    os.makedirs(CACHE, exist_ok=True)
    with capsys.disabled():
        yield


# -- cached training -----------------------------------------------------------

def source_fingerprint():
    h = hashlib.sha256()
    for dirpath, dirnames, files in sorted(os.walk(SRC)):
        dirnames[:] = sorted(d for d in dirnames if d != "__pycache__")
        for f in sorted(files):
            if f.endswith((".py", ".layout", ".cfg", ".model")):
                path = os.path.join(dirpath, f)
                h.update(os.path.relpath(path, SRC).encode())
                with open(path, "rb") as fh:
                    h.update(fh.read())
    return h.hexdigest()


def trained(config, tag):
    """Checkpoint path and training seconds for ``config``, training on a cache miss."""
    from walknav.harness.config import format_config
    key = hashlib.sha256((format_config(config.with_(output_dir="-")) + source_fingerprint()).encode())
    out = os.path.join(CACHE, f"{tag}-seed{config.seed}-{key.hexdigest()[:12]}")
    marker = os.path.join(out, "done.json")
    if not os.path.exists(marker):
        t = time.perf_counter()
        res = train(config.with_(output_dir=out))
        assert res.exit_code == 0
        with open(marker, "w") as fh:
            json.dump({"seconds": time.perf_counter() - t}, fh)
    with open(marker) as fh:
        return os.path.join(out, "checkpoint.bin"), json.load(fh)["seconds"]


# -- 1. gradient correctness -------------------------------------------------

def test_gradient_correctness():
    rng = np.random.default_rng(2024)
    worst, t0 = 0.0, time.perf_counter()
    for i in range(12):
        sizes = (int(rng.integers(1, 6)), *(int(rng.integers(2, 9)) for _ in range(rng.integers(1, 4))),
                 int(rng.integers(1, 4)))
        spec = MlpSpec(sizes, output_activation=str(rng.choice(["identity", "tanh"])))
        flat = init_params(spec, seed=i, final_scale=1.0).flat()
        params = ParameterSet.from_flat(spec, flat + 0.1 * rng.normal(size=flat.size))
        x, g = rng.normal(size=sizes[0]), rng.normal(size=sizes[-1])
        _, cache = forward(params, x)
        grads, _ = backward(params, cache, g)
        flat, h = params.flat(), 1e-5
        num = np.empty_like(flat)
        for j in range(flat.size):
            e = np.zeros_like(flat)
            e[j] = h
            up = forward(ParameterSet.from_flat(spec, flat + e), x)[0] @ g
            dn = forward(ParameterSet.from_flat(spec, flat - e), x)[0] @ g
            num[j] = (up - dn) / (2 * h)
        ana = grads.flat()
        rel = np.abs(ana - num) / np.maximum(np.abs(ana) + np.abs(num), 1e-6)
        worst = max(worst, float(rel.max()))
    secs = time.perf_counter() - t0
    verdict("gradient correctness", worst < 1e-4 and secs < 60,
            f"12 random MLPs, max relative error {worst:.2e} (< 1e-4), {secs:.1f} s")


# -- 2. GAE oracle -----------------------------------------------------------

def test_gae_oracle():
    rng = np.random.default_rng(77)
    worst, t0 = 0.0, time.perf_counter()
    for _ in range(100):
        n = int(rng.integers(1, 40))
        gamma, lam = float(rng.uniform(0.9, 1.0)), float(rng.uniform(0.5, 1.0))
        r, v = rng.normal(size=n), rng.normal(size=n)
        term = rng.random(n) < 0.1
        trunc = (rng.random(n) < 0.1) & ~term
        fv = np.where(trunc, rng.normal(size=n), 0.0)
        boot = float(rng.normal())
        buf = RolloutBuffer(n, 1, 1)
        for t in range(n):
            buf.append(Transition(np.zeros(1), np.zeros(1), 0.0, r[t], v[t], term[t], trunc[t], fv[t]))
        buf.bootstrap_value = boot
        adv, _ = compute_gae(buf, gamma, lam)
        # nested sums: A_t = sum over the rest of the episode of (gamma lam)^l delta_{t+l}
        for t in range(n):
            total = 0.0
            for u in range(t, n):
                nxt = 0.0 if term[u] else fv[u] if trunc[u] else boot if u == n - 1 else v[u + 1]
                total += (gamma * lam) ** (u - t) * (r[u] + gamma * nxt - v[u])
                if term[u] or trunc[u]:
                    break
            worst = max(worst, abs(total - adv[t]))
    secs = time.perf_counter() - t0
    verdict("GAE oracle", worst < 1e-10 and secs < 60,
            f"100 random buffers, max abs error {worst:.1e} (< 1e-10), {secs:.1f} s")


# -- 3. reward exactness -------------------------------------------------------

def test_reward_exactness():
    rng = np.random.default_rng(5)
    cfg = RewardConfig()
    worst = 0.0
    for _ in range(1000):
        obs = [tuple(rng.uniform(-4, 4, 2)) for _ in range(int(rng.integers(0, 7)))]
        dest, init = tuple(rng.uniform(-4, 4, 2)), tuple(rng.uniform(-4, 4, 2))
        p = tuple(rng.uniform(-5, 5, 2))
        got, _ = distance_reward(p, cfg.targets(dest, obs, init))
        want = cfg.w_destination * math.exp(-cfg.k_destination * math.dist(p, dest))
        want += cfg.w_initial * math.exp(-cfg.k_initial * math.dist(p, init))
        for o in obs:
            want += cfg.w_obstacle * math.exp(-cfg.k_obstacle * math.dist(p, o))
        worst = max(worst, abs(got - want))
    at_dest = distance_reward((5.0, 0.0), [DistanceTarget((5.0, 0.0), 0.3, 0.95, "destination")])[0]
    at_obs = distance_reward((2.0, 1.0), [DistanceTarget((2.0, 1.0), 1.5, -0.2, "obstacle")])[0]
    composite = distance_reward((0.0, 0.0), [
        DistanceTarget((5.0, 0.0), 0.5, 0.95, "destination"),
        DistanceTarget((2.0, 1.0), 1.0, -0.2, "obstacle"),
        DistanceTarget((0.0, 0.0), 1.0, -0.5, "initial_position")])[0]
    # 0.95 e^-2.5 - 0.2 e^-sqrt(5) - 0.5, computed at 30 digits before the implementation
    frozen = -0.443394836439373299619309098139
    ok = worst < 1e-12 and at_dest == 0.95 and at_obs == -0.2 and abs(composite - frozen) < 1e-15
    verdict("reward exactness", ok,
            f"1000 layouts max error {worst:.1e}; destination {at_dest!r}, obstacle {at_obs!r}, "
            f"composite {composite!r} vs {frozen!r}")


# -- 4. physics sanity -------------------------------------------------------

def test_physics_sanity():
    model = BipedModel()
    P = model.params()
    q = model.default_q()
    q[1] = 1.2
    qd = np.array([0.3, 0.5, 0.8, 2.0, -1.5, -1.0, 2.5])
    qdd, _ = dyn.accelerations(q, qd, np.zeros(4), np.zeros(2), P)
    acc = dyn.com_state(q, qd, qdd, P)[2]
    fall_err = max(abs(acc[0]), abs(acc[1] + model.g))

    passive = P.copy()
    passive[[dyn.P_KP_HIP, dyn.P_KD_HIP, dyn.P_KP_KNEE, dyn.P_KD_KNEE]] = 0.0
    qq, vv, anchor = q.copy(), qd.copy(), np.zeros(2)
    e0 = dyn.mechanical_energy(qq, vv, passive)
    for _ in range(100):
        dyn.physics_substep(qq, vv, np.zeros(4), anchor, passive, 1e-3)
    drift = abs(dyn.mechanical_energy(qq, vv, passive) - e0) / abs(e0)

    survived = []
    for seed in SEEDS:
        env = BipedEnv(model)
        env.reset(np.random.default_rng(seed))
        n = 0
        while n < 400:
            n += 1
            res = env.step(np.zeros(4))
            if res.terminated:
                break
        survived.append(n if not res.terminated else n - 1)
    ok = fall_err < 1e-9 and drift < 0.005 and all(s >= 400 for s in survived)
    verdict("physics sanity", ok,
            f"free-fall error {fall_err:.1e} (< 1e-9); energy drift {100 * drift:.4f}% (< 0.5%); "
            f"zero-action standing {survived} steps (>= 400)")


# -- 5. point-mass learning ----------------------------------------------------

def pointmass_runs():
    base = load_config("pointmass")
    return [(s, *trained(base.with_(seed=s), "pointmass")) for s in SEEDS]


def test_pointmass_learning():
    base = load_config("pointmass")
    rows, ok = [], base.total_steps <= 2_000_000
    for seed, ckpt, secs in pointmass_runs():
        rep = evaluate(ckpt, episodes=100)
        good = rep.success_rate >= 0.9 and rep.collision_rate <= 0.05 and secs <= 1800
        ok &= good
        rows.append(f"seed {seed}: goal {rep.success_rate:.2f} coll {rep.collision_rate:.2f} "
                    f"train {secs:.0f}s")
    verdict("point-mass learning", ok,
            f"{base.total_steps} steps; " + "; ".join(rows) + " (need goal >= 0.90, coll <= 0.05, <= 30 min)")


# -- 6. step-in-place ablation -----------------------------------------------

def stepper_reports(tag, **overrides):
    base = load_config("stepper").with_(**overrides)
    return [evaluate(trained(base.with_(seed=s), tag)[0], episodes=100) for s in SEEDS]


def test_step_in_place_ablation():
    full = stepper_reports("stepper-full")
    noinit = stepper_reports("stepper-noinit", w_initial=0.0)
    d_full = float(np.mean([r.mean_net_displacement for r in full]))
    d_noinit = float(np.mean([r.mean_net_displacement for r in noinit]))
    succ = float(np.mean([r.success_rate for r in full]))
    ratio = d_full / d_noinit if d_noinit > 0 else math.inf
    verdict("step-in-place ablation", ratio >= 2.0 and succ >= 0.8,
            f"net displacement full {d_full:.3f} m vs no initial repulsor {d_noinit:.3f} m "
            f"(ratio {ratio:.2f}, need >= 2); full goal rate {succ:.2f} (need >= 0.80); "
            f"no-repulsor goal rate {np.mean([r.success_rate for r in noinit]):.2f}")


# -- 7. obstacle weight vs step size -----------------------------------------

def test_obstacle_weight_step_size_tradeoff():
    light = stepper_reports("stepper-full")
    heavy = stepper_reports("stepper-heavy", w_obstacle=-1.0)
    s_light = float(np.mean([r.mean_step_length for r in light]))
    s_heavy = float(np.mean([r.mean_step_length for r in heavy]))
    drop = 1.0 - s_heavy / s_light
    verdict("obstacle-weight/step-size tradeoff", drop >= 0.15,
            f"mean step length w=-0.2 {s_light:.4f} m vs w=-1.0 {s_heavy:.4f} m "
            f"(reduction {100 * drop:.1f}%, need >= 15%); heavy goal rate "
            f"{np.mean([r.success_rate for r in heavy]):.2f}")


# -- 8. biped learning -------------------------------------------------------

def test_biped_learning():
    cfg = load_config("biped")
    ckpt, secs = trained(cfg, "biped")
    base = random_baseline(cfg, episodes=100)
    rep = evaluate(ckpt, episodes=100)
    ok = (cfg.total_steps <= 10_000_000 and rep.mean_length >= 5 * base.mean_length
          and rep.mean_forward_displacement >= 1.0)
    verdict("biped learning", ok,
            f"{cfg.total_steps} steps ({secs:.0f}s): mean length {rep.mean_length:.1f} vs random "
            f"{base.mean_length:.1f} (ratio {rep.mean_length / base.mean_length:.2f}, need >= 5); "
            f"forward {rep.mean_forward_displacement:.2f} m (need >= 1); falls {rep.fall_rate:.2f}")


# -- 9. robustness protocol ----------------------------------------------------

def axis_degradation(rows, base_success):
    """Mean success drop per axis over obstacle cells valid on both axes."""
    cells = {(r["target_index"], r["axis"], r["offset"]): r for r in rows
             if r["target_kind"] == "obstacle" and r["offset"] != 0.0}
    drops = {"x": [], "y": []}
    for (idx, axis, off), r in cells.items():
        if axis != "x":
            continue
        twin = cells.get((idx, "y", off))
        if r["valid"] and twin is not None and twin["valid"]:
            drops["x"].append(base_success - r["success"])
            drops["y"].append(base_success - twin["success"])
    return {k: float(np.mean(v)) for k, v in drops.items()}, len(drops["x"])


def test_robustness_protocol(tmp_path):
    grid = SweepGrid(offsets=(-1.0, -0.5, 0.0, 0.5, 1.0), episodes=20, seed=0)
    n_obstacles = 4
    expected_rows = (n_obstacles + 1) * 2 * len(grid.offsets)
    full_ok, zero_ok, per_seed, dest_notes = True, True, [], []
    for seed, ckpt, _ in pointmass_runs():
        loaded = load_checkpoint_policy(ckpt)
        out = tmp_path / f"sweep{seed}.csv"
        rows = robustness_sweep(loaded, None, grid, str(out))
        with open(out) as fh:
            lines = fh.read().splitlines()
        full_ok &= len(rows) == expected_rows and lines[0] == ",".join(SWEEP_COLUMNS) \
            and len(lines) == expected_rows + 1
        plain = evaluate(loaded, None, grid.episodes, True, grid.seed)
        for r in rows:
            if r["offset"] == 0.0:
                zero_ok &= (r["success"], r["collision"], r["timeout"], r["mean_return"]) == \
                    (plain.success_rate, plain.collision_rate, plain.timeout_rate, plain.mean_return)
        deg, n_pairs = axis_degradation(rows, plain.success_rate)
        per_seed.append(deg)
        far = robustness_sweep(loaded, None, SweepGrid(offsets=(1.5,), axes=("x",),
                                                       targets=("destination",), episodes=20))
        dest_notes.append(f"{far[0]['success']:.2f}" if far[0]["valid"] else "invalid")
    dx = float(np.mean([d["x"] for d in per_seed]))
    dy = float(np.mean([d["y"] for d in per_seed]))
    detail = (f"grid rows {expected_rows} per seed: {'ok' if full_ok else 'BAD'}; zero cell == evaluate: "
              f"{'ok' if zero_ok else 'BAD'}; success drop frontal(y) {dy:.3f} vs sagittal(x) {dx:.3f} "
              f"over {n_pairs} paired cells, per seed "
              + ", ".join(f"y {d['y']:.3f}/x {d['x']:.3f}" for d in per_seed)
              + f"; destination +1.5 m x success {', '.join(dest_notes)}")
    verdict("robustness protocol", full_ok and zero_ok and dy < dx, detail)


# -- 10. determinism ---------------------------------------------------------

def test_determinism(tmp_path):
    cfg = ExperimentConfig(env="pointmass", layout="course4", hidden=(64, 64), seed=7,
                           total_steps=6 * 4096)

    def read(p):
        with open(p, "rb") as fh:
            return fh.read()
    a = train(cfg.with_(output_dir=str(tmp_path / "a")))
    b = train(cfg.with_(output_dir=str(tmp_path / "b")))
    split_cfg = cfg.with_(output_dir=str(tmp_path / "c"))
    half = train(split_cfg, stop_after=3)
    c = train(split_cfg, resume=half.checkpoint_path)
    same = read(a.metrics_path) == read(b.metrics_path) and read(a.checkpoint_path) == read(b.checkpoint_path)
    split = read(c.metrics_path) == read(a.metrics_path) and read(c.checkpoint_path) == read(a.checkpoint_path)
    n_rows = len(read(a.metrics_path).splitlines()) - 1
    verdict("determinism", same and split and n_rows == 6,
            f"two runs byte-identical: {same}; resume after 3 of 6 updates identical: {split}")
