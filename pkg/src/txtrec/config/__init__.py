"""Run configuration and its packaged defaults."""

from txtrec.config.run import (
    DEFAULTS_FILE,
    RUN_CONFIG_FILE,
    DataSettings,
    RunConfig,
    load_defaults,
    load_run_config,
    merge,
    read_config_file,
)

__all__ = [
    "DEFAULTS_FILE",
    "RUN_CONFIG_FILE",
    "DataSettings",
    "RunConfig",
    "load_defaults",
    "load_run_config",
    "merge",
    "read_config_file",
]
