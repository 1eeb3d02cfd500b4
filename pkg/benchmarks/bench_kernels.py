"""Compiled vs pure-Python kernels: GAE over a rollout and a biped episode.

Run ``python benchmarks/bench_kernels.py``.  GAE is timed in process
(``gae_kernel`` vs ``gae_kernel.py_func``).  The biped kernels call each
other, so ``py_func`` on the outer one would still use compiled helpers; the
biped episode is therefore timed in two subprocesses, with and without
``WALKNAV_DISABLE_NUMBA=1``, and their final states are compared.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from walknav._accel import NUMBA_ENABLED
from walknav.ppo import gae_kernel

BIPED_CODE = """
import json, time, numpy as np
from walknav.envs.biped import BipedEnv
env = BipedEnv(); rng = np.random.default_rng(0); env.reset(rng)
acts = rng.uniform(-0.3, 0.3, size=({steps}, 4))
env.step(acts[0])   # compile outside the timing
env.reset(np.random.default_rng(0))
t = time.perf_counter()
for a in acts:
    env.step(a)
print(json.dumps({{"seconds": time.perf_counter() - t, "q": list(env.q)}}))
"""


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def gae_args(n):
    rng = np.random.default_rng(0)
    return (rng.normal(size=n), rng.normal(size=n), rng.normal(size=n),
            rng.random(n) < 0.01, rng.random(n) < 0.005, 0.99, 0.95)


def biped_episode(steps, disable):
    env = dict(os.environ)
    env["WALKNAV_DISABLE_NUMBA"] = "1" if disable else "0"
    out = subprocess.run([sys.executable, "-c", BIPED_CODE.format(steps=steps)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--gae-steps", type=int, default=4096)
    ap.add_argument("--biped-steps", type=int, default=100)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)
    if not NUMBA_ENABLED:
        print("numba is disabled or missing here; the compiled columns fall back to Python")

    a = gae_args(args.gae_steps)
    gae_kernel(*a)
    fast_t, fast = best_of(lambda: gae_kernel(*a), args.repeats)
    slow_t, slow = best_of(lambda: gae_kernel.py_func(*a), args.repeats)
    rows = [("gae", fast_t, slow_t, np.allclose(fast, slow, rtol=1e-12, atol=1e-12))]

    jit, py = biped_episode(args.biped_steps, False), biped_episode(args.biped_steps, True)
    rows.append(("biped", jit["seconds"], py["seconds"],
                 np.allclose(jit["q"], py["q"], rtol=1e-9, atol=1e-9)))

    print(f"{'case':8} {'numba s':>10} {'python s':>10} {'speedup':>8}  agree")
    for name, f, s_, ok in rows:
        print(f"{name:8} {f:10.5f} {s_:10.5f} {s_ / f:8.1f}  {ok}")
    print(f"biped control steps/s: numba {args.biped_steps / jit['seconds']:.0f}, "
          f"python {args.biped_steps / py['seconds']:.0f}")
    return 0 if all(r[3] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
