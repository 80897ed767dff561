import json
from pathlib import Path

import pytest

from reflexnav.config import (ConfigError, ScenarioConfig, apply_overrides, config_digest, config_from_dict,
                              config_to_dict, load_config)

ROOT = Path(__file__).resolve().parents[1]


def test_shipped_default_yaml_matches_defaults():
    assert load_config(ROOT / "configs" / "default.yaml") == ScenarioConfig()


def test_json_round_trip(tmp_path):
    cfg = apply_overrides(ScenarioConfig(), ["threat.alpha=0.3", "seed=12"])
    p = tmp_path / "c.json"
    p.write_text(json.dumps(config_to_dict(cfg)))
    assert load_config(p) == cfg


def test_overrides_parse_scalars():
    cfg = apply_overrides(ScenarioConfig(), ["control.k_psi=3", "spawn.type_weights={linear: 1.0}"])
    assert cfg.control.k_psi == 3 and cfg.spawn.type_weights == {"linear": 1.0}


@pytest.mark.parametrize("item", ["threat.nope=1", "nosection.x=1", "threat.alpha", "threat.alpha=1.5",
                                  "dt=0", "threat.t_lo=2.0"])
def test_bad_overrides_raise(item):
    with pytest.raises(ConfigError):
        apply_overrides(ScenarioConfig(), [item])


def test_unknown_file_keys_raise():
    with pytest.raises(ConfigError, match="unknown keys"):
        config_from_dict({"robot": {"wheels": 4}})


def test_unreadable_config_raises(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("robot: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_digest_tracks_content():
    a = ScenarioConfig()
    assert config_digest(a) == config_digest(ScenarioConfig())
    assert config_digest(a) != config_digest(apply_overrides(a, ["threat.gamma=3"]))
    assert len(config_digest(a)) == 16
