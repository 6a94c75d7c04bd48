from .config import RunConfig, SCHEMA, default_config, load_config, parse_config_text
from .main import main

__all__ = [
    "RunConfig",
    "SCHEMA",
    "default_config",
    "load_config",
    "parse_config_text",
    "main",
]
