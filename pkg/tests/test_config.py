"""Configuration schema: strict parsing, defaults, and round-trip dumping."""
import math

import pytest

from dpdflock.config import (
    ConfigError,
    config_as_dict,
    config_from_dict,
    dump_config,
    load_config,
    loads_config,
)
from dpdflock.engine import InitSpec
from dpdflock.leader import Circle, Mission, UniformLine

MINIMAL = """
[model]
n_agents = 4

[control]
alpha = 1.0
r0 = 4.64
beta = 1.0
v0 = 0.5
"""


def test_minimal_config_and_defaults():
    cfg = loads_config(MINIMAL)
    assert cfg.model.n_agents == 4
    assert cfg.model.dim == 3
    assert cfg.model.a_coef == 10.0
    assert cfg.control.alpha == 1.0
    assert cfg.control.k_kind == "linear"
    assert cfg.trajectory == UniformLine()
    assert cfg.init == InitSpec()
    assert cfg.dt == 1e-2
    assert cfg.n_steps == 100_000
    assert cfg.seed == 0
    assert cfg.record_every == 100
    assert cfg.run_index == 0
    assert cfg.record_states is False


def test_full_config_parses():
    text = MINIMAL + """
[trajectory]
kind = "circle"
center = [0.0, 0.0, 0.0]
radius = 46.4
speed = 1.0
e1 = [1.0, 0.0, 0.0]
e2 = [0.0, 1.0, 0.0]

[init]
r_init = 5.0
vel_std = 0.5
vel_support = 0.75

[run]
dt = 0.001
n_steps = 500
seed = 42
record_every = 10
record_states = true
"""
    cfg = loads_config(text)
    assert isinstance(cfg.trajectory, Circle)
    assert cfg.trajectory.radius == 46.4
    assert cfg.init.vel_support == 0.75
    assert cfg.dt == 0.001
    assert cfg.n_steps == 500
    assert cfg.seed == 42
    assert cfg.record_states is True


def test_line_and_mission_trajectories():
    line = loads_config(MINIMAL + """
[trajectory]
kind = "line"
start = [1.0, 2.0, 3.0]
direction = [0.0, 0.0, 5.0]
speed = 2.0
""")
    assert line.trajectory == UniformLine((1.0, 2.0, 3.0), (0.0, 0.0, 1.0), 2.0)

    mission = loads_config(MINIMAL + """
[trajectory]
kind = "mission"
start = [0.0, 0.0, 0.0]
target = [40.0, 0.0, 0.0]
cruise_speed = 1.0
n_rotations = 2
rot_radius = 5.0
accel = 0.1
""")
    assert isinstance(mission.trajectory, Mission)
    assert mission.trajectory.build_spec["n_rotations"] == 2


def test_unknown_keys_and_sections_are_rejected():
    with pytest.raises(ConfigError, match="n_step"):
        loads_config(MINIMAL + "\n[run]\nn_step = 10\n")
    with pytest.raises(ConfigError, match="typo_section"):
        loads_config(MINIMAL + "\n[typo_section]\nx = 1\n")
    with pytest.raises(ConfigError, match="radius"):
        loads_config(MINIMAL + '\n[trajectory]\nkind = "line"\nradius = 4.0\n')


def test_required_keys():
    with pytest.raises(ConfigError, match="n_agents"):
        loads_config("[model]\ndim = 3\n[control]\nalpha = 1.0\nr0 = 0.0\nbeta = 1.0\nv0 = 0.0\n")
    with pytest.raises(ConfigError, match="beta"):
        loads_config("[model]\nn_agents = 2\n[control]\nalpha = 1.0\nr0 = 0.0\nv0 = 0.0\n")


def test_toml_syntax_error():
    with pytest.raises(ConfigError, match="TOML parse error"):
        loads_config("[model\nn_agents = 2")


def test_invalid_values_become_config_errors():
    with pytest.raises(ConfigError, match="model"):
        loads_config(MINIMAL.replace("n_agents = 4", "n_agents = 0"))
    with pytest.raises(ConfigError, match="run"):
        loads_config(MINIMAL + "\n[run]\ndt = -0.5\n")
    with pytest.raises(ConfigError, match="trajectory"):
        loads_config(MINIMAL + '\n[trajectory]\nkind = "circle"\ne1 = [1.0, 0.0, 0.0]\ne2 = [1.0, 0.0, 0.0]\n')
    with pytest.raises(ConfigError, match="kind"):
        loads_config(MINIMAL + '\n[trajectory]\nkind = "spiral"\n')


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/run.toml")


def test_load_config_from_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(MINIMAL)
    assert load_config(path) == loads_config(MINIMAL)


@pytest.mark.parametrize(
    "traj_text",
    [
        "",
        '[trajectory]\nkind = "line"\nstart = [1.0, 0.5, 0.0]\ndirection = [0.0, 1.0, 0.0]\nspeed = 0.0\n',
        '[trajectory]\nkind = "circle"\ncenter = [2.0, 0.0, 1.0]\nradius = 3.5\nspeed = 2.0\ne1 = [0.0, 1.0, 0.0]\ne2 = [0.0, 0.0, 1.0]\n',
        '[trajectory]\nkind = "mission"\nstart = [0.0, 0.0, 0.0]\ntarget = [10.0, 5.0, 0.0]\ncruise_speed = 0.5\nn_rotations = 1\nrot_radius = 2.0\naccel = 0.05\n',
    ],
)
def test_dump_round_trip(traj_text):
    extra = "\n[run]\ndt = 0.005\nn_steps = 777\nseed = 13\nrecord_every = 7\nrecord_states = true\n"
    cfg = loads_config(MINIMAL + traj_text + extra)
    text = dump_config(cfg)
    assert loads_config(text) == cfg


def test_dump_preserves_awkward_floats():
    cfg = loads_config(MINIMAL + f"\n[run]\ndt = {1.0 / 3.0!r}\n")
    again = loads_config(dump_config(cfg))
    assert again.dt == cfg.dt  # bit-exact, not approximately


def test_config_dict_round_trip():
    cfg = loads_config(MINIMAL + "\n[init]\nr_init = 2.5\n")
    doc = config_as_dict(cfg)
    assert doc["model"]["n_agents"] == 4
    assert doc["trajectory"]["kind"] == "line"
    assert doc["run"]["n_steps"] == 100_000
    assert config_from_dict(doc) == cfg


def test_config_from_dict_rejects_junk():
    with pytest.raises(ConfigError):
        config_from_dict({"model": {"n_agents": 2}, "control": {}, "oops": {}})
