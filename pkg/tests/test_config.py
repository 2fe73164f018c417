import json

import pytest

from lsfanim.config import RunConfig, config_from_dict, default_config, load_config
from lsfanim.errors import ConfigError


def test_defaults_validate():
    cfg = RunConfig()
    cfg.validate()
    assert cfg.stage1_config().lr == 1e-4
    assert cfg.stage2_config().lr == 1e-5
    assert cfg.sampler_config().n_samples == 10
    assert cfg.corpus_config().n_subjects == 10


def test_dump_and_reload_round_trip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(default_config()))
    cfg = load_config(path)
    assert cfg.raw == default_config()


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="turbo"):
        config_from_dict({"turbo": 1})


def test_unknown_nested_key_rejected():
    with pytest.raises(ConfigError, match="dims.magic"):
        config_from_dict({"dims": {"magic": 3}})


def test_section_must_be_object():
    with pytest.raises(ConfigError, match="dims"):
        config_from_dict({"dims": 5})


def test_width_must_divide_heads():
    with pytest.raises(ConfigError, match="divisible"):
        config_from_dict({"dims": {"d": 10, "heads": 4}})


def test_rates_must_divide():
    with pytest.raises(ConfigError, match="divisible"):
        config_from_dict({"rates": {"feature_hz": 50, "fps": 30}})


def test_bad_quantize_mode_rejected():
    cfg = config_from_dict({"stage2": {"quantize_mode": "none"}})
    assert cfg.stage2_config().quantize_mode == "none"
    with pytest.raises(ConfigError):
        config_from_dict({"stage2": {"quantize_mode": "soft"}}).stage2_config().validate()


def test_partial_override_keeps_other_defaults():
    cfg = config_from_dict({"stage1": {"lr": 5e-4}})
    assert cfg.stage1_config().lr == 5e-4
    assert cfg.stage1_config().batch_size == default_config()["stage1"]["batch_size"]
