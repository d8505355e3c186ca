import json
import logging

import pytest

from latentknn.config_manager import ConfigManager
from latentknn.errors import ConfigError
from latentknn.estimator import Fallback, Variant


def test_defaults_without_file(isolated_config):
    config = ConfigManager()
    assert config.config_dir == isolated_config
    assert config.get("k") == 5
    assert config.get("variant") == "user-user"
    assert config.get("beta_high") is None
    assert not config.config_path.exists()


def test_set_persists(isolated_config):
    ConfigManager().set("k", 10)
    assert (isolated_config / ConfigManager.CONFIG_FILENAME).exists()
    assert ConfigManager().get("k") == 10


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        ConfigManager().set("neighbours", 3)


def test_explicit_path(tmp_path):
    path = tmp_path / "custom.json"
    path.write_text(json.dumps({"fallback": "global-mean"}))
    config = ConfigManager(config_path=path)
    assert config.get("fallback") == "global-mean"
    assert config.get("k") == 5


@pytest.mark.parametrize("content", ["{not json", "[1, 2, 3]"])
def test_unreadable_file_falls_back(isolated_config, caplog, content):
    isolated_config.mkdir(parents=True)
    (isolated_config / ConfigManager.CONFIG_FILENAME).write_text(content)
    with caplog.at_level(logging.WARNING):
        config = ConfigManager()
    assert config.get_all() == ConfigManager.DEFAULTS
    assert "Ignoring unreadable config" in caplog.text


def test_reset():
    config = ConfigManager()
    config.set("k", 7)
    config.set("lambda", 2.5)
    config.reset_key("k")
    assert config.get("k") == 5
    assert config.get("lambda") == 2.5
    config.reset()
    assert ConfigManager().get("lambda") == 1.0


def test_get_all_is_a_copy():
    config = ConfigManager()
    values = config.get_all()
    values["k"] = 99
    assert config.get("k") == 5


def test_estimator_config_from_settings():
    config = ConfigManager()
    config.set("variant", "item-item")
    config.set("beta", 4)
    cfg = config.estimator_config({"k": 3, "beta": None})
    assert cfg.variant is Variant.ITEM_ITEM
    assert cfg.k == 3
    assert cfg.beta_low == 4
    assert cfg.fallback is Fallback.ZERO


def test_invalid_stored_setting():
    config = ConfigManager()
    config.set("beta", 1)
    with pytest.raises(ConfigError):
        config.estimator_config()
