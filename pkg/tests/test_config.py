import json

import pytest

from ewdecay.config import ConfigError, RunConfig, from_dict


def test_defaults_validate():
    cfg = RunConfig()
    assert cfg.geometry.dim == 2 and cfg.initial_data.kind == "fourier-mode"
    assert from_dict({}) == cfg


@pytest.mark.parametrize("data", [
    {"geometry": {"radius": 1}},
    {"solver": {}},
    {"geometry": {"dim": 4}},
    {"geometry": {"R0": 2.0, "R1": 1.0}},
    {"geometry": {"n_r": 2.5}},
    {"damping": {"enabled": "yes"}},
    {"tensor": {"kind": "orthotropic"}},
    {"initial_data": {"seed": -1}},
    {"initial_data": {"kind": "gaussian"}},
    {"time": {"T": 0}},
    {"nonlinearity": {"p": [3.0, 3.0, 3.0]}},
    {"flags": {"out_of_theory_2d": False}},
    {"geometry": []},
    [],
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        from_dict(data)


def test_json_round_trip(tmp_path):
    cfg = RunConfig().replace(geometry={"dim": 3, "n_face": 4}, nonlinearity={"p": [3, 4, 5]})
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    back = RunConfig.load(path)
    assert back == cfg and back.nonlinearity.p == [3.0, 4.0, 5.0]
    assert json.loads(path.read_text())["geometry"]["n_face"] == 4


def test_ints_promote_to_float():
    assert from_dict({"time": {"T": 4}}).time.T == 4.0


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "bad.json")
    with pytest.raises(ConfigError):
        RunConfig().replace(nope={})
