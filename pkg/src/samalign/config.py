"""Layered configuration: flags > env > file > defaults.

The file format is TOML-like: ``[section]`` headers and ``key = value``
lines, where values are JSON literals (quoted strings, numbers, true/
false, arrays). Environment overrides use ``SAM_ALIGN__SECTION__KEY``.
Unknown sections or keys are rejected outright.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from .errors import PipelineError

ENV_PREFIX = "SAM_ALIGN__"

# section -> key -> (expected type, default)
SCHEMA: dict[str, dict[str, tuple[type, Any]]] = {
    "imagery": {
        "url_template": (str, "https://example.invalid/static?lon={lon}&lat={lat}&zoom={zoom}&size={w}x{h}"),
        "auth_header": (str, ""),
        "max_rps": (float, 2.0),
        "max_concurrency": (int, 4),
        "width": (int, 1024),
        "height": (int, 1024),
        "zoom": (int, 16),
    },
    "caption": {
        "base_url": (str, "http://127.0.0.1:8000/v1"),
        "model_id": (str, "annotator-model"),
        "max_concurrency": (int, 2),
        "retry_budget": (int, 3),
        "default_max_tokens": (int, 1024),
    },
    "reward": {
        "keyword_weight": (float, 1.0),
        "format_weight": (float, 0.5),
        "reasoning_model": (bool, True),
    },
    "grpo": {
        "group_size": (int, 4),
        "clip_epsilon": (float, 0.2),
        "kl_beta": (float, 0.04),
        "learning_rate": (float, 1e-6),
        "batch_size": (int, 8),
        "episodes": (int, 6000),
        "seed": (int, 42),
        "max_len": (int, 12),
        "sft_passes": (int, 3000),
        "sft_learning_rate": (float, 6.0),
    },
    "eval": {
        "keywords": (list, ["military", "missile", "silo"]),
        "reasoning_model": (bool, False),
    },
    "paths": {
        "manifest": (str, "manifest.jsonl"),
        "cache": (str, "cache"),
        "outputs": (str, "outputs"),
        "verdicts": (str, "verdicts.jsonl"),
    },
    "review": {
        "port": (int, 8787),
        "kmz_first": (bool, True),
    },
}


class ConfigError(PipelineError):
    pass


@dataclass
class AppConfig:
    values: dict[str, dict[str, Any]] = field(default_factory=dict)

    def get(self, section: str, key: str) -> Any:
        return self.values[section][key]

    def set(self, section: str, key: str, value: Any) -> None:
        _check_key(section, key)
        self.values[section][key] = _coerce(section, key, value)


def _check_key(section: str, key: str) -> None:
    if section not in SCHEMA:
        raise ConfigError(f"unknown config section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown config key {section}.{key}")


def _coerce(section: str, key: str, value: Any) -> Any:
    expected, _ = SCHEMA[section][key]
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if expected is bool and not isinstance(value, bool):
        raise ConfigError(f"{section}.{key} expects a boolean, got {value!r}")
    if not isinstance(value, expected) or (expected is int and isinstance(value, bool)):
        raise ConfigError(f"{section}.{key} expects {expected.__name__}, got {value!r}")
    return value


def _parse_literal(raw: str, where: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}: cannot parse value {raw!r}: {exc}") from exc


def _defaults() -> dict[str, dict[str, Any]]:
    return {section: {key: default for key, (_, default) in keys.items()} for section, keys in SCHEMA.items()}


def load_config(
    path: Optional[Union[str, Path]] = None,
    env: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> AppConfig:
    """Build the effective configuration.

    ``overrides`` maps dotted "section.key" names to already-typed values
    (used for CLI flags) and wins over everything else.
    """
    cfg = AppConfig(values=_defaults())

    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        section = None
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if stripped.startswith("[") and stripped.endswith("]"):
                section = stripped[1:-1].strip()
                if section not in SCHEMA:
                    raise ConfigError(f"{path}:{lineno}: unknown config section [{section}]")
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            if section is None:
                raise ConfigError(f"{path}:{lineno}: key outside of any [section]")
            key, _, raw = stripped.partition("=")
            cfg.set(section, key.strip(), _parse_literal(raw.strip(), f"{path}:{lineno}"))

    env = os.environ if env is None else env
    for name, raw in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        parts = name[len(ENV_PREFIX):].split("__")
        if len(parts) != 2:
            raise ConfigError(f"bad override variable {name}: expected {ENV_PREFIX}SECTION__KEY")
        section, key = parts[0].lower(), parts[1].lower()
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        cfg.set(section, key, value)

    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        cfg.set(section, key, value)

    return cfg
