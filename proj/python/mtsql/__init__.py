"""Python bindings for the mtsql text-to-SQL core."""

from ._core import (
    CheckpointError,
    ConfigError,
    Model,
    ParseError,
    Session,
    TrainError,
    check_config,
    config_keys,
    default_config,
    hungarian_match,
    stem,
    tokenize,
)

__version__ = "0.1.0"
