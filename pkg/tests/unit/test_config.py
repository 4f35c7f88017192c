"""
Unit tests for configuration management
"""

import pytest
from pydantic import ValidationError

from config import Settings, get_settings, load_settings_from_file, setup_logging


class TestSettings:
    """Test Settings class"""

    def test_settings_with_defaults(self, mock_settings):
        """Defaults without any environment"""
        assert mock_settings.log_level == "INFO"
        assert mock_settings.log_format == "console"
        assert mock_settings.seed == 0
        assert mock_settings.discount == 0.95
        assert mock_settings.particles == 1000
        assert mock_settings.node_pool_cap == 1000
        assert mock_settings.uct_c is None
        assert mock_settings.step_cap == 30

    def test_settings_from_env(self, monkeypatch):
        monkeypatch.setenv("AOS_SEED", "42")
        monkeypatch.setenv("AOS_SIMULATIONS", "250")
        monkeypatch.setenv("AOS_UCT_C", "12.5")
        monkeypatch.setenv("AOS_REINVIGORATE", "false")

        settings = Settings(_env_file=None)

        assert settings.seed == 42
        assert settings.simulations == 250
        assert settings.uct_c == 12.5
        assert settings.reinvigorate is False

    def test_log_level_is_normalised(self, monkeypatch):
        monkeypatch.setenv("AOS_LOG_LEVEL", "debug")
        assert Settings(_env_file=None).log_level == "DEBUG"

    def test_settings_validation_log_level(self, monkeypatch):
        monkeypatch.setenv("AOS_LOG_LEVEL", "INVALID")
        with pytest.raises(ValidationError):
            Settings(_env_file=None)

    def test_settings_validation_log_format(self, monkeypatch):
        monkeypatch.setenv("AOS_LOG_FORMAT", "xml")
        with pytest.raises(ValidationError):
            Settings(_env_file=None)

    @pytest.mark.parametrize("name,value", [
        ("AOS_DISCOUNT", "0"),
        ("AOS_DISCOUNT", "1.5"),
        ("AOS_EPS", "0.1"),
        ("AOS_PARTICLES", "0"),
        ("AOS_SIMULATIONS", "-3"),
        ("AOS_STEP_CAP", "-1"),
        ("AOS_REINVIGORATION_FLOOR", "2"),
    ])
    def test_out_of_range_values_rejected(self, monkeypatch, name, value):
        monkeypatch.setenv(name, value)
        with pytest.raises(ValidationError):
            Settings(_env_file=None)

    def test_zero_step_cap_allowed(self, monkeypatch):
        monkeypatch.setenv("AOS_STEP_CAP", "0")
        assert Settings(_env_file=None).step_cap == 0

    def test_load_settings_from_file(self, tmp_path):
        env_file = tmp_path / "test.env"
        env_file.write_text("AOS_SEED=7\nAOS_MAX_DEPTH=5\n")

        settings = load_settings_from_file(str(env_file))

        assert settings.seed == 7
        assert settings.max_depth == 5


class TestSettingsHelpers:
    """Grouped views used by the planner and the belief tracker"""

    def test_get_planner_config(self, mock_settings):
        config = mock_settings.get_planner_config()
        assert config == {"simulations": 5000, "max_depth": 20, "uct_c": None, "seed": 0,
                          "node_pool_cap": 1000, "tree_reuse": False}

    def test_get_belief_config(self, mock_settings):
        config = mock_settings.get_belief_config()
        assert config["retry_factor"] == 16
        assert config["floor"] == 0.05
        assert config["reinvigorate"] is True

    def test_get_settings_returns_module_instance(self):
        assert get_settings() is get_settings()


class TestLogging:
    """Test structlog setup"""

    @pytest.mark.parametrize("log_format", ["json", "console"])
    def test_setup_logging(self, log_format):
        setup_logging(level="WARNING", log_format=log_format)
