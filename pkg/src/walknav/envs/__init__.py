"""Built-in environments: ``pointmass``, ``stepper`` and ``biped``."""

import os
from importlib import resources

ENV_IDS = ("pointmass", "stepper", "biped")


def builtin_layout_path(name):
    """Path of a shipped layout file, e.g. ``course4``."""
    return str(resources.files("walknav") / "data" / f"{name}.layout")


def resolve_layout(spec):
    """Load a layout from a file path or the name of a shipped layout."""
    from walknav.envs.layout import EnvironmentLayout, load_layout
    if isinstance(spec, EnvironmentLayout):
        return spec
    if os.path.exists(spec):
        return load_layout(spec)
    path = builtin_layout_path(spec)
    if os.path.exists(path):
        return load_layout(path)
    raise FileNotFoundError(f"no layout file or shipped layout named {spec!r}")


def make_env(env_id, layout=None, reward_config=None, **kwargs):
    if env_id == "pointmass":
        from walknav.envs.pointmass import PointMassEnv
        return PointMassEnv(resolve_layout(layout), reward_config, **kwargs)
    if env_id == "stepper":
        from walknav.envs.stepper import StepperEnv
        return StepperEnv(resolve_layout(layout), reward_config, **kwargs)
    if env_id == "biped":
        from walknav.envs.biped import BipedEnv, resolve_model
        return BipedEnv(resolve_model(kwargs.pop("model", None)), reward_config=reward_config, **kwargs)
    raise ValueError(f"unknown environment {env_id!r}; choose from {ENV_IDS}")
