import json

import pytest

from tlsreflect.config import config_from_dict, default_config, load_config
from tlsreflect.exceptions import ConfigError


def test_defaults():
    cfg = default_config()
    assert cfg.seed == 0 and cfg.radiometry.percentile == 85.0 and cfg.radiometry.threshold is None
    s = cfg.scoring
    assert (s.radius, s.normal_k, s.sigma_sym, s.sigma_sim, s.threshold) == (0.5, 50, 0.15, 0.5, 0.5)
    assert cfg.validate() is cfg


def test_round_trip(tmp_path):
    cfg = default_config()
    cfg.scoring.threshold = 0.7
    cfg.planes.eps = 0.25
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert load_config(path) == cfg


def test_partial_config_fills_defaults():
    cfg = config_from_dict({"scoring": {"radius": 0.4}})
    assert cfg.scoring.radius == 0.4 and cfg.scoring.n1 == 11


@pytest.mark.parametrize("data, needle", [
    ({"bogus": 1}, "bogus"),
    ({"scoring": {"sigma": 1}}, "scoring: unknown key"),
    ({"planes": 3}, "expected an object"),
    ({"seed": 1.5}, "integer"),
    ({"seed": True}, "integer"),
    ({"scoring": {"radius": "big"}}, "finite number"),
    ({"stages": {"metrics": 1}}, "true/false"),
    ({"output_dir": None}, "null"),
])
def test_type_errors(data, needle):
    with pytest.raises(ConfigError, match=needle):
        config_from_dict(data)


@pytest.mark.parametrize("data", [
    {"scoring": {"threshold": 1.0}},
    {"scoring": {"sigma_sym": 0}},
    {"radiometry": {"percentile": 85, "threshold": 3.0}},
    {"radiometry": {"percentile": None}},
    {"radiometry": {"percentile": 101}},
    {"radiometry": {"ref_angle_cos": 0}},
    {"planes": {"merge_cos": 1.5}},
    {"threads": 0},
])
def test_range_errors(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_invalid_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(path)


def test_threshold_instead_of_percentile():
    cfg = config_from_dict(json.loads('{"radiometry": {"percentile": null, "threshold": 2.5}}'))
    assert cfg.radiometry.threshold == 2.5
