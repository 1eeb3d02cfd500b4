"""Seeded, splittable random streams built on numpy's counter-based Philox."""

import json

import numpy as np


def spawn_generators(seed, n):
    """``n`` independent generators derived from one master seed."""
    return [np.random.Generator(np.random.Philox(s))
            for s in np.random.SeedSequence(seed).spawn(n)]


def training_streams(seed, n_workers):
    """(learner stream, [worker streams]); worker i's stream ignores the worker count."""
    learner, workers = np.random.SeedSequence(seed).spawn(2)
    worker_seqs = [np.random.SeedSequence(workers.entropy, spawn_key=(*workers.spawn_key, i))
                   for i in range(n_workers)]
    return (np.random.Generator(np.random.Philox(learner)),
            [np.random.Generator(np.random.Philox(s)) for s in worker_seqs])


def eval_stream(seed, episode):
    """Stream for one evaluation episode, independent of every other episode."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 7919, episode])))


def dump_state(gen):
    state = gen.bit_generator.state
    if state["bit_generator"] != "Philox":
        raise ValueError("only Philox streams are serialisable")
    out = {
        "bit_generator": "Philox",
        "counter": [int(v) for v in state["state"]["counter"]],
        "key": [int(v) for v in state["state"]["key"]],
        "buffer": [int(v) for v in state["buffer"]],
        "buffer_pos": int(state["buffer_pos"]),
        "has_uint32": int(state["has_uint32"]),
        "uinteger": int(state["uinteger"]),
    }
    return json.dumps(out, sort_keys=True)


def load_state(text):
    d = json.loads(text)
    if d.get("bit_generator") != "Philox":
        raise ValueError(f"unsupported bit generator {d.get('bit_generator')!r}")
    bg = np.random.Philox()
    bg.state = {
        "bit_generator": "Philox",
        "state": {"counter": np.array(d["counter"], dtype=np.uint64),
                  "key": np.array(d["key"], dtype=np.uint64)},
        "buffer": np.array(d["buffer"], dtype=np.uint64),
        "buffer_pos": d["buffer_pos"],
        "has_uint32": d["has_uint32"],
        "uinteger": d["uinteger"],
    }
    return np.random.Generator(bg)
