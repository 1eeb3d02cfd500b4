"""Obstacle course description and its key=value file format.

Example file::

    # four posts between start and goal
    initial = 0.0,0.0
    destination = 5.0,0.0,0.3
    obstacle = 1.5,0.45,0.25
    workspace = -1.5,7.0,-3.0,3.0
    w_obstacle = -0.2

Floats are written with ``repr`` so a parse/format cycle is bit-exact.
"""

import math
from dataclasses import dataclass, field, replace

from walknav.rewards import RewardConfig

REWARD_KEYS = ("w_destination", "w_obstacle", "w_initial",
               "k_destination", "k_obstacle", "k_initial")


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class EnvironmentLayout:
    obstacles: tuple = ()                 # of (x, y, r)
    destination: tuple = (5.0, 0.0)
    goal_radius: float = 0.3
    initial: tuple = (0.0, 0.0)
    workspace: tuple = (-1.5, 7.0, -3.0, 3.0)   # xmin, xmax, ymin, ymax
    overrides: tuple = ()                 # sorted (key, value) pairs

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.goal_radius <= 0:
            raise LayoutError("goal radius must be positive")
        xmin, xmax, ymin, ymax = self.workspace
        if not (xmin < xmax and ymin < ymax):
            raise LayoutError("empty workspace")
        for name, p in (("initial", self.initial), ("destination", self.destination)):
            if not (xmin <= p[0] <= xmax and ymin <= p[1] <= ymax):
                raise LayoutError(f"{name} position outside workspace")
        for i, (x, y, r) in enumerate(self.obstacles):
            if r <= 0:
                raise LayoutError(f"obstacle {i}: radius must be positive")
            if not (xmin <= x <= xmax and ymin <= y <= ymax):
                raise LayoutError(f"obstacle {i} outside workspace")
            if math.hypot(x - self.initial[0], y - self.initial[1]) <= r:
                raise LayoutError(f"obstacle {i} covers the initial position")
            if math.hypot(x - self.destination[0], y - self.destination[1]) <= r + self.goal_radius:
                raise LayoutError(f"obstacle {i} overlaps the goal disk")
        for key, _ in self.overrides:
            if key not in REWARD_KEYS:
                raise LayoutError(f"unknown reward override {key!r}")

    @property
    def obstacle_centers(self):
        return [(x, y) for x, y, _ in self.obstacles]

    def reward_config(self, base=None):
        cfg = RewardConfig() if base is None else replace(base)
        for key, value in self.overrides:
            setattr(cfg, key, value)
        return cfg

    def with_overrides(self, **kw):
        merged = dict(self.overrides)
        merged.update({k: float(v) for k, v in kw.items()})
        return replace(self, overrides=tuple(sorted(merged.items())))

    def displaced(self, kind, index, axis, offset):
        """Copy with one obstacle (``kind='obstacle'``) or the destination moved.

        Raises LayoutError if the moved target violates the layout invariants.
        """
        ax = {"x": 0, "y": 1}[axis]
        if kind == "obstacle":
            obs = [list(o) for o in self.obstacles]
            obs[index][ax] += offset
            return replace(self, obstacles=tuple(tuple(o) for o in obs))
        if kind == "destination":
            d = list(self.destination)
            d[ax] += offset
            return replace(self, destination=tuple(d))
        raise ValueError(f"cannot displace {kind!r}")


def _floats(value, n, key, lineno):
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != n:
        raise LayoutError(f"line {lineno}: {key} expects {n} comma-separated numbers")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise LayoutError(f"line {lineno}: {exc}") from None


def parse_layout(text):
    obstacles, fields_ = [], {}
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise LayoutError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "obstacle":
            obstacles.append(_floats(value, 3, key, lineno))
        elif key == "destination":
            x, y, r = _floats(value, 3, key, lineno)
            fields_["destination"], fields_["goal_radius"] = (x, y), r
        elif key == "initial":
            fields_["initial"] = _floats(value, 2, key, lineno)
        elif key == "workspace":
            fields_["workspace"] = _floats(value, 4, key, lineno)
        elif key in REWARD_KEYS:
            overrides[key] = _floats(value, 1, key, lineno)[0]
        else:
            raise LayoutError(f"line {lineno}: unknown key {key!r}")
    return EnvironmentLayout(obstacles=tuple(obstacles),
                             overrides=tuple(sorted(overrides.items())), **fields_)


def format_layout(layout):
    def f(*vals):
        return ",".join(repr(float(v)) for v in vals)

    lines = [f"initial = {f(*layout.initial)}",
             f"destination = {f(*layout.destination, layout.goal_radius)}",
             f"workspace = {f(*layout.workspace)}"]
    lines += [f"obstacle = {f(*o)}" for o in layout.obstacles]
    lines += [f"{k} = {f(v)}" for k, v in layout.overrides]
    return "\n".join(lines) + "\n"


def load_layout(path):
    with open(path) as fh:
        return parse_layout(fh.read())


def save_layout(layout, path):
    with open(path, "w") as fh:
        fh.write(format_layout(layout))
