"""Flat ``key = value`` config files and precedence resolution.

Keys mirror :class:`~graphfuse.net.NetworkConfig` and
:class:`~graphfuse.train.TrainConfig` field names. Values are Python
literals (``1e-4``, ``[3, 4, 5]``, ``true``, ``none``); ``#`` starts a
comment. Precedence: command-line flags > config file > defaults.
"""

import ast
from dataclasses import fields

from .net import NetworkConfig
from .train import TrainConfig

NET_KEYS = {f.name for f in fields(NetworkConfig)}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_WORDS = {"true": True, "false": False, "none": None, "null": None}


class ConfigError(ValueError):
    pass


def parse_value(text):
    text = text.strip()
    if text.lower() in _WORDS:
        return _WORDS[text.lower()]
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config_text(text, source="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in NET_KEYS | TRAIN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = parse_value(value)
    return values


def read_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), str(path))


def parse_overrides(pairs):
    """``["lr0=1e-3", ...]`` from repeated ``--set`` flags."""
    return parse_config_text("\n".join(pairs), "--set")


def resolve(file_values=None, flag_values=None):
    """Merge layers and build ``(NetworkConfig, TrainConfig)``."""
    merged = {}
    merged.update(file_values or {})
    merged.update({k: v for k, v in (flag_values or {}).items() if v is not None})
    try:
        net = NetworkConfig(**{k: v for k, v in merged.items() if k in NET_KEYS})
        train = TrainConfig(**{k: v for k, v in merged.items() if k in TRAIN_KEYS})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return net, train
