import json

import pytest

from vmbsim.app.config import SimConfig, load_config, save_config
from vmbsim.app.presets import PRESETS
from vmbsim.errors import ConfigError


def test_defaults_valid():
    cfg = SimConfig()
    assert cfg.grid.nx == 32
    assert cfg.dt == "auto"
    assert cfg.mode == "classical"


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_preset_round_trip(name):
    cfg = PRESETS[name]()
    assert SimConfig.from_dict(cfg.to_dict()) == cfg
    assert SimConfig.from_json(cfg.to_json()) == cfg
    json.loads(cfg.to_json())


def test_from_dict_builds_sections():
    cfg = SimConfig.from_dict({"grid": {"nx": 4, "nv": 6}, "steps": 3,
                               "initial": {"components": [{"density": 2.0}]}})
    assert (cfg.grid.nx, cfg.grid.nv, cfg.steps) == (4, 6, 3)
    assert cfg.initial.components[0].density == 2.0
    assert cfg.initial.components[0].velocity == (0.0, 0.0, 0.0)


@pytest.mark.parametrize("data", [
    {"grid": {"nx": 0}},
    {"grid": {"nv": 1}},
    {"grid": {"length": -1.0}},
    {"grid": {"vmax": float("inf")}},
    {"grid": {"nx": 2.5}},
    {"grid": {"nx": True}},
    {"kernel": {"model": "maxwell"}},
    {"kernel": {"model": "vhs", "alpha": -3.0}},
    {"quad": {"polar": 0}},
    {"transport": {"mode": "quantum"}},
    {"transport": {"cfl_safety": 1.5}},
    {"transport": {"gauss_correction": "on"}},
    {"collision": {"integrator": "rk4"}},
    {"collision": {"enabled": "yes"}},
    {"collision": {"strength": 0.0}},
    {"initial": {"components": []}},
    {"initial": {"components": [{"velocity": [1.0, 2.0]}]}},
    {"initial": {"components": [{"density_amplitude": 1.0}]}},
    {"initial": {"fields": {"B": "up"}}},
    {"perturbation": {"l1": -1e-3}},
    {"commutator": {"eps": 0.1}},
    {"commutator": {"eps": [0.1, -0.05]}},
    {"output": {"cadence": 0}},
    {"output": {"plots": 1}},
    {"dt": 0.0},
    {"dt": "fast"},
    {"steps": -1},
    {"experiment": "plot"},
    {"grid": {"nx": "many"}},
    {"grid": []},
])
def test_invalid_values(data):
    with pytest.raises(ConfigError):
        SimConfig.from_dict(data)


@pytest.mark.parametrize("data", [{"gird": {}}, {"grid": {"nz": 3}}, {"output": {"dir": "x"}}])
def test_unknown_keys(data):
    with pytest.raises(ConfigError, match="unknown"):
        SimConfig.from_dict(data)


def test_not_an_object():
    with pytest.raises(ConfigError):
        SimConfig.from_dict([1, 2])
    with pytest.raises(ConfigError):
        SimConfig.from_json("{nope")


def test_replace_dotted_keys():
    cfg = SimConfig().replace(**{"grid.nx": 8, "steps": 5, "collision.integrator": "heun"})
    assert (cfg.grid.nx, cfg.steps, cfg.collision.integrator) == (8, 5, "heun")
    assert SimConfig().grid.nx == 32
    with pytest.raises(ConfigError):
        SimConfig().replace(**{"grid.nx": -1})
    with pytest.raises(ConfigError):
        SimConfig().replace(**{"nosuch.key": 1})


def test_save_and_load(tmp_path):
    cfg = PRESETS["weak_beam"](steps=7)
    path = tmp_path / "cfg.json"
    save_config(cfg, path)
    assert load_config(path) == cfg


def test_load_errors(tmp_path):
    with pytest.raises(OSError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"grid": {"nx": -2}}')
    with pytest.raises(ConfigError):
        load_config(bad)
