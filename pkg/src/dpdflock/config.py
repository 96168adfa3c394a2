"""TOML run-configuration schema: strict loading, defaults, and round-trip dumping.

Sections map one-to-one onto the library's parameter containers:

* ``[model]``      -> :class:`dpdflock.model.ModelParams`
* ``[control]``    -> :class:`dpdflock.model.ControlParams`
* ``[trajectory]`` -> a leader trajectory (``kind`` selects the shape)
* ``[init]``       -> :class:`dpdflock.engine.InitSpec`
* ``[run]``        -> the remaining :class:`dpdflock.engine.RunConfig` fields

Unknown sections or keys are hard errors: silently ignoring a typo like
``n_step = 10`` would change physics without warning.  A dumped config parses
back to an identical RunConfig.
"""
from __future__ import annotations

from dataclasses import asdict
from pathlib import Path
from typing import Dict, Union

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .engine import InitSpec, RunConfig
from .leader import Circle, Mission, UniformLine, build_mission
from .model import ControlParams, ModelParams

__all__ = [
    "ConfigError",
    "load_config",
    "loads_config",
    "config_from_dict",
    "dump_config",
    "config_as_dict",
]


class ConfigError(ValueError):
    """The configuration file is malformed or violates the schema."""


_SECTIONS = ("model", "control", "trajectory", "init", "run")

_MODEL_KEYS = {"n_agents", "dim", "mass", "a_coef", "b_coef", "r_c", "r_d", "weight_kind"}
_CONTROL_KEYS = {"alpha", "r0", "beta", "v0", "k_kind", "p_kind", "k_exponent", "p_exponent"}
_INIT_KEYS = {"r_init", "vel_std", "vel_support"}
_RUN_KEYS = {"dt", "n_steps", "seed", "record_every", "run_index", "record_states"}
_TRAJECTORY_KEYS = {
    "line": {"kind", "start", "direction", "speed"},
    "circle": {"kind", "center", "radius", "speed", "e1", "e2"},
    "mission": {
        "kind",
        "start",
        "target",
        "cruise_speed",
        "n_rotations",
        "rot_radius",
        "accel",
    },
}


def _check_keys(section: str, data: dict, allowed: set):
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}"
        )


def _build(section: str, cls, data: dict):
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}] section: {exc}") from exc


def _build_trajectory(data: dict):
    kind = data.get("kind")
    if kind not in _TRAJECTORY_KEYS:
        raise ConfigError(
            f"[trajectory] kind must be one of {sorted(_TRAJECTORY_KEYS)}, got {kind!r}"
        )
    _check_keys("trajectory", data, _TRAJECTORY_KEYS[kind])
    body = {k: v for k, v in data.items() if k != "kind"}
    try:
        if kind == "line":
            return UniformLine(**{k: tuple(v) if isinstance(v, list) else v for k, v in body.items()})
        if kind == "circle":
            return Circle(**{k: tuple(v) if isinstance(v, list) else v for k, v in body.items()})
        return build_mission(**body)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [trajectory] section: {exc}") from exc


def loads_config(text: str) -> RunConfig:
    """Parse a TOML document into a validated :class:`RunConfig`."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from exc
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> RunConfig:
    """Validate a nested config dict (parsed TOML or an embedded JSON copy)."""
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")

    model_data = doc.get("model", {})
    _check_keys("model", model_data, _MODEL_KEYS)
    if "n_agents" not in model_data:
        raise ConfigError("[model] must set n_agents")
    model = _build("model", ModelParams, model_data)

    control_data = doc.get("control", {})
    _check_keys("control", control_data, _CONTROL_KEYS)
    for key in ("alpha", "r0", "beta", "v0"):
        if key not in control_data:
            raise ConfigError(f"[control] must set {key}")
    control = _build("control", ControlParams, control_data)

    trajectory = _build_trajectory(doc.get("trajectory", {"kind": "line"}))

    init_data = doc.get("init", {})
    _check_keys("init", init_data, _INIT_KEYS)
    init = _build("init", InitSpec, init_data)

    run_data = doc.get("run", {})
    _check_keys("run", run_data, _RUN_KEYS)
    return _build(
        "run",
        RunConfig,
        dict(model=model, control=control, trajectory=trajectory, init=init, **run_data),
    )


def load_config(path: Union[str, Path]) -> RunConfig:
    """Load and validate a TOML configuration file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads_config(text)


# ---------------------------------------------------------------------------
# dumping
# ---------------------------------------------------------------------------


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)  # shortest round-trip representation
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialise {type(v).__name__} to TOML")


def _trajectory_dict(traj) -> Dict:
    if isinstance(traj, UniformLine):
        return {
            "kind": "line",
            "start": list(traj.start),
            "direction": list(traj.direction),
            "speed": traj.speed,
        }
    if isinstance(traj, Circle):
        return {
            "kind": "circle",
            "center": list(traj.center),
            "radius": traj.radius,
            "speed": traj.speed,
            "e1": list(traj.e1),
            "e2": list(traj.e2),
        }
    if isinstance(traj, Mission):
        spec = traj.build_spec if hasattr(traj, "build_spec") else None
        if spec is None:
            raise ConfigError(
                "mission trajectories can only be dumped when created via "
                "build_mission (construction parameters are required)"
            )
        return {"kind": "mission", **spec}
    raise ConfigError(f"cannot serialise trajectory of type {type(traj).__name__}")


def config_as_dict(cfg: RunConfig) -> Dict[str, Dict]:
    """Plain nested-dict form of a config (the JSON-friendly resolved view)."""
    return {
        "model": asdict(cfg.model),
        "control": asdict(cfg.control),
        "trajectory": _trajectory_dict(cfg.trajectory),
        "init": asdict(cfg.init),
        "run": {
            "dt": cfg.dt,
            "n_steps": cfg.n_steps,
            "seed": cfg.seed,
            "record_every": cfg.record_every,
            "run_index": cfg.run_index,
            "record_states": cfg.record_states,
        },
    }


def dump_config(cfg: RunConfig) -> str:
    """Serialise a config to TOML text that re-parses to an identical RunConfig."""
    parts = []
    for section, data in config_as_dict(cfg).items():
        parts.append(f"[{section}]")
        for key, value in data.items():
            parts.append(f"{key} = {_toml_value(value)}")
        parts.append("")
    return "\n".join(parts)
