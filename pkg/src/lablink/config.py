"""Service configuration: a human-editable YAML tree plus LABLINK_* env
overrides. Core modules (registry, floorplan, devices, tsstore) are always
on; only surveys, faultwatch, and dashboards can be toggled."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from zoneinfo import ZoneInfo

import yaml

from .errors import ConfigError
from .faultwatch import FaultwatchConfig

OPTIONAL_MODULES = frozenset({"surveys", "faultwatch", "dashboards"})
CORE_MODULES = ("registry", "floorplan", "devices", "tsstore")

ENV_PREFIX = "LABLINK_"


@dataclass
class ServiceConfig:
    data_dir: Path = Path("lablink-data")
    listen_address: str = "127.0.0.1:8080"
    deployment_tz: str = "UTC"
    enabled_modules: frozenset = OPTIONAL_MODULES
    default_radius_m: float = 5.0
    survey_grace_s: float = 86400.0
    faultwatch: FaultwatchConfig = field(default_factory=FaultwatchConfig)
    admin_username: str | None = None
    admin_password: str | None = None

    def module_enabled(self, name: str) -> bool:
        return name in CORE_MODULES or name in self.enabled_modules

    def validate(self) -> "ServiceConfig":
        try:
            ZoneInfo(self.deployment_tz)
        except Exception as exc:
            raise ConfigError(f"invalid deployment_tz {self.deployment_tz!r}: {exc}")
        bogus = set(self.enabled_modules) - OPTIONAL_MODULES
        if bogus & set(CORE_MODULES):
            raise ConfigError(f"core modules are always enabled: {sorted(bogus)}")
        if bogus:
            raise ConfigError(f"unknown modules in enabled_modules: {sorted(bogus)}")
        if self.default_radius_m <= 0:
            raise ConfigError("dashboards.default_radius_m must be positive")
        if self.survey_grace_s < 0:
            raise ConfigError("surveys.grace_s must be non-negative")
        return self


def _coerce(value: str, target_type):
    if target_type is float:
        return float(value)
    if target_type is int:
        return int(value)
    return value


def _apply_env(tree: dict, env: dict) -> dict:
    """LABLINK_KEY for top-level keys, LABLINK_SECTION__KEY for nested."""
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX):].lower().split("__")
        node = tree
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"env override {name} conflicts with config tree")
        node[path[-1]] = value
    return tree


def load_config(path: str | Path | None = None, env: dict | None = None) -> ServiceConfig:
    tree: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}")
        if loaded is not None:
            if not isinstance(loaded, dict):
                raise ConfigError(f"config root must be a mapping, got {type(loaded).__name__}")
            tree = loaded
    _apply_env(tree, env if env is not None else dict(os.environ))
    return config_from_tree(tree)


def config_from_tree(tree: dict) -> ServiceConfig:
    config = ServiceConfig()

    if "data_dir" in tree:
        config.data_dir = Path(tree["data_dir"])
    if "listen_address" in tree:
        config.listen_address = str(tree["listen_address"])
    if "deployment_tz" in tree:
        config.deployment_tz = str(tree["deployment_tz"])
    if "enabled_modules" in tree:
        raw = tree["enabled_modules"]
        if isinstance(raw, str):
            raw = [part.strip() for part in raw.split(",") if part.strip()]
        config.enabled_modules = frozenset(raw)

    dashboards = tree.get("dashboards") or {}
    if "default_radius_m" in dashboards:
        config.default_radius_m = float(dashboards["default_radius_m"])
    surveys = tree.get("surveys") or {}
    if "grace_s" in surveys:
        config.survey_grace_s = float(surveys["grace_s"])
    admin = tree.get("admin") or {}
    config.admin_username = admin.get("username")
    config.admin_password = admin.get("password")

    overrides = tree.get("faultwatch") or {}
    known = {f.name: f.type for f in fields(FaultwatchConfig)}
    unknown = set(overrides) - set(known)
    if unknown:
        raise ConfigError(f"unknown faultwatch settings: {sorted(unknown)}")
    fw_kwargs = {}
    for name, value in overrides.items():
        default = getattr(FaultwatchConfig(), name)
        if isinstance(value, str):
            value = _coerce(value, type(default))
        fw_kwargs[name] = type(default)(value)
    config.faultwatch = FaultwatchConfig(**fw_kwargs)

    return config.validate()


def config_to_tree(config: ServiceConfig) -> dict:
    return {
        "data_dir": str(config.data_dir),
        "listen_address": config.listen_address,
        "deployment_tz": config.deployment_tz,
        "enabled_modules": sorted(config.enabled_modules),
        "dashboards": {"default_radius_m": config.default_radius_m},
        "surveys": {"grace_s": config.survey_grace_s},
        "faultwatch": dataclasses.asdict(config.faultwatch),
    }
