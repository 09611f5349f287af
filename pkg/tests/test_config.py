from __future__ import annotations

import pytest

from lablink.config import ServiceConfig, config_to_tree, load_config
from lablink.errors import ConfigError


def write_config(tmp_path, text):
    path = tmp_path / "lablink.yaml"
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadConfig:
    def test_full_tree(self, tmp_path):
        path = write_config(
            tmp_path,
            """
            data_dir: /tmp/lab-data
            listen_address: 0.0.0.0:9000
            deployment_tz: America/New_York
            enabled_modules: [surveys, dashboards]
            dashboards:
              default_radius_m: 7.5
            surveys:
              grace_s: 3600
            faultwatch:
              partial_loss_threshold: 0.1
              consensus_z_threshold: 4.0
            """,
        )
        config = load_config(path, env={})
        assert str(config.data_dir) == "/tmp/lab-data"
        assert config.deployment_tz == "America/New_York"
        assert config.enabled_modules == frozenset({"surveys", "dashboards"})
        assert config.module_enabled("registry")       # core, always on
        assert not config.module_enabled("faultwatch")
        assert config.default_radius_m == 7.5
        assert config.survey_grace_s == 3600.0
        assert config.faultwatch.partial_loss_threshold == 0.1
        assert config.faultwatch.consensus_z_threshold == 4.0
        # untouched thresholds keep their defaults
        assert config.faultwatch.counter_modulus == 256

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.yaml", env={})

    def test_defaults_without_file(self):
        config = load_config(None, env={})
        assert config.deployment_tz == "UTC"
        assert config.enabled_modules == frozenset({"surveys", "faultwatch", "dashboards"})

    def test_malformed_timezone_fails_at_boot(self, tmp_path):
        path = write_config(tmp_path, "deployment_tz: Mars/Olympus_Mons\n")
        with pytest.raises(ConfigError):
            load_config(path, env={})

    def test_core_module_cannot_be_toggled(self, tmp_path):
        path = write_config(tmp_path, "enabled_modules: [registry, surveys]\n")
        with pytest.raises(ConfigError):
            load_config(path, env={})

    def test_unknown_module_rejected(self, tmp_path):
        path = write_config(tmp_path, "enabled_modules: [surveys, espresso]\n")
        with pytest.raises(ConfigError):
            load_config(path, env={})

    def test_unknown_faultwatch_key_rejected(self, tmp_path):
        path = write_config(tmp_path, "faultwatch:\n  jitter_limit: 3\n")
        with pytest.raises(ConfigError):
            load_config(path, env={})

    def test_invalid_yaml(self, tmp_path):
        path = write_config(tmp_path, "enabled_modules: [unclosed\n")
        with pytest.raises(ConfigError):
            load_config(path, env={})


class TestEnvOverrides:
    def test_flat_and_nested_overrides(self, tmp_path):
        path = write_config(tmp_path, "deployment_tz: UTC\n")
        config = load_config(
            path,
            env={
                "LABLINK_DEPLOYMENT_TZ": "Europe/Berlin",
                "LABLINK_ENABLED_MODULES": "surveys,faultwatch",
                "LABLINK_DASHBOARDS__DEFAULT_RADIUS_M": "3.5",
                "LABLINK_FAULTWATCH__COUNTER_MODULUS": "65536",
                "IGNORED_OTHER": "1",
            },
        )
        assert config.deployment_tz == "Europe/Berlin"
        assert config.enabled_modules == frozenset({"surveys", "faultwatch"})
        assert config.default_radius_m == 3.5
        assert config.faultwatch.counter_modulus == 65536

    def test_roundtrip_tree(self):
        tree = config_to_tree(ServiceConfig())
        assert tree["deployment_tz"] == "UTC"
        assert tree["faultwatch"]["consensus_z_threshold"] == 3.5
