"""
Config Manager - Handles estimator defaults and their persistence
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from latentknn.errors import ConfigError
from latentknn.estimator import EstimatorConfig

logger = logging.getLogger(__name__)


class ConfigManager:
    """Manages default hyperparameters and run settings"""

    CONFIG_FILENAME = "latentknn_config.json"
    ENV_DIR = "LATENTKNN_CONFIG_DIR"

    # Default settings
    DEFAULTS = {
        "variant": "user-user",
        "k": 5,
        "beta": 2,
        "beta_high": None,
        "lambda": 1.0,
        "lambda_grid": [1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4, 2.6, 2.8],
        "include_self": False,
        "fallback": "zero",
        "target": "missing-only",
        "threads": 1,
        "log_level": "INFO",
        "holdout_fraction": 0.1,
    }

    def __init__(self, config_dir: str = None, config_path: str = None):
        """
        Initialize config manager.
        An explicit file wins, then $LATENTKNN_CONFIG_DIR, then the user's
        app data directory.
        """
        if config_path:
            self.config_path = Path(config_path)
            self.config_dir = self.config_path.parent
        else:
            if config_dir:
                self.config_dir = Path(config_dir)
            elif os.environ.get(self.ENV_DIR):
                self.config_dir = Path(os.environ[self.ENV_DIR])
            elif os.name == 'nt':  # Windows
                app_data = os.environ.get('APPDATA', Path.home())
                self.config_dir = Path(app_data) / "latentknn"
            else:  # macOS/Linux
                self.config_dir = Path.home() / ".latentknn"
            self.config_path = self.config_dir / self.CONFIG_FILENAME

        self._data = self._load()

    def _load(self) -> Dict:
        """Load configuration from disk, merged over the defaults"""
        merged = self.DEFAULTS.copy()
        if self.config_path.exists():
            try:
                with open(self.config_path, 'r', encoding='utf-8') as f:
                    saved = json.load(f)
                if not isinstance(saved, dict):
                    raise ValueError("top level is not an object")
                merged.update(saved)
            except (json.JSONDecodeError, ValueError, IOError) as e:
                logger.warning(f"Ignoring unreadable config {self.config_path}: {e}")
        return merged

    def save(self):
        """Save configuration to disk"""
        try:
            self.config_dir.mkdir(parents=True, exist_ok=True)

            with open(self.config_path, 'w', encoding='utf-8') as f:
                json.dump(self._data, f, indent=2, sort_keys=True)
        except (IOError, OSError, PermissionError) as e:
            # Non-fatal
            logger.warning(f"Failed to save config: {e}")

    def get(self, key: str, default: Any = None) -> Any:
        """Get a configuration value"""
        return self._data.get(key, default if default is not None else self.DEFAULTS.get(key))

    def set(self, key: str, value: Any):
        """Set a configuration value and save"""
        if key not in self.DEFAULTS:
            raise ConfigError(f"unknown setting {key!r}")
        self._data[key] = value
        self.save()

    def get_all(self) -> Dict:
        """Get all configuration values"""
        return self._data.copy()

    def reset(self):
        """Reset all settings to defaults"""
        self._data = self.DEFAULTS.copy()
        self.save()

    def reset_key(self, key: str):
        """Reset a specific setting to default"""
        if key in self.DEFAULTS:
            self._data[key] = self.DEFAULTS[key]
            self.save()

    def estimator_config(self, overrides: Optional[Dict[str, Any]] = None) -> EstimatorConfig:
        """
        Build an EstimatorConfig from the stored values.
        Overrides with value None keep the stored setting.
        """
        values = self.get_all()
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = value
        return EstimatorConfig(
            variant=values["variant"],
            k=values["k"],
            beta_low=values["beta"],
            beta_high=values["beta_high"],
            lam=values["lambda"],
            include_self=bool(values["include_self"]),
            fallback=values["fallback"],
        )
