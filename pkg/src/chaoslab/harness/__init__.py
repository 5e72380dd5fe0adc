"""Configuration, orchestration, persistence and the command line."""

from .config import ExperimentConfig, config_keys, default_config, parse_config, serialize_config
from .run import RunManifest, execute

__all__ = ["ExperimentConfig", "RunManifest", "config_keys", "default_config", "execute",
           "parse_config", "serialize_config"]
