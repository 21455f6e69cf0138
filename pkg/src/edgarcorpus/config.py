"""Layered configuration: defaults < config file < environment < command-line flags.

Environment variables are ``EDGARCORPUS_<SECTION>__<KEY>``, for example
``EDGARCORPUS_CLIENT__USER_AGENT`` or ``EDGARCORPUS_DB__URL``. Top-level
keys drop the section: ``EDGARCORPUS_LOG_LEVEL``.
"""

from __future__ import annotations

import copy
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .edgar_client import (DEFAULT_COMPANY_METADATA_URL, DEFAULT_INDEX_PATH_TEMPLATE,
                           DEFAULT_RATE_LIMIT_SIGNATURES, ClientConfig)
from .errors import ConfigError, EdgarCorpusError

ENV_PREFIX = "EDGARCORPUS_"

DEFAULTS = {
    "client": {
        "base_url": "https://www.sec.gov/Archives/",
        "user_agent": "",
        "max_requests_per_second": 8.0,
        "max_retries": 4,
        "backoff_base": 0.5,
        "timeout": 30.0,
        "index_path_template": DEFAULT_INDEX_PATH_TEMPLATE,
        "company_metadata_url": DEFAULT_COMPANY_METADATA_URL,
        "rate_limit_signatures_file": None,
        "first_index_year": 1993,
    },
    "store": {
        "backend": "filesystem",
        "root": "./data/objects",
        "bucket": None,
        "endpoint_url": None,
        "region": "us-east-1",
        "access_key": None,
        "secret_key": None,
        "prefix": "",
    },
    "db": {"url": "sqlite:///./data/corpus.db"},
    "extractor": {"url": None},
    "pipeline": {"worker_count": 4, "retry_limit": 2, "filing_index_type": "master"},
    "log_level": "INFO",
}


def _positive_float(value):
    value = float(value)
    if value <= 0:
        raise ValueError("must be positive")
    return value


def _non_negative_int(value):
    value = int(value)
    if value < 0:
        raise ValueError("must be >= 0")
    return value


def _positive_int(value):
    value = int(value)
    if value < 1:
        raise ValueError("must be >= 1")
    return value


def _optional_str(value):
    return None if value in (None, "") else str(value)


def _choice(*options):
    def check(value):
        if value not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return value
    return check


def _log_level(value):
    value = str(value).upper()
    if not isinstance(logging.getLevelName(value), int):
        raise ValueError("not a logging level")
    return value


CONVERTERS = {
    "client.base_url": str,
    "client.user_agent": str,
    "client.max_requests_per_second": _positive_float,
    "client.max_retries": _non_negative_int,
    "client.backoff_base": float,
    "client.timeout": _positive_float,
    "client.index_path_template": str,
    "client.company_metadata_url": str,
    "client.rate_limit_signatures_file": _optional_str,
    "client.first_index_year": _positive_int,
    "store.backend": _choice("filesystem", "s3"),
    "store.root": str,
    "store.bucket": _optional_str,
    "store.endpoint_url": _optional_str,
    "store.region": str,
    "store.access_key": _optional_str,
    "store.secret_key": _optional_str,
    "store.prefix": str,
    "db.url": str,
    "extractor.url": _optional_str,
    "pipeline.worker_count": _positive_int,
    "pipeline.retry_limit": _non_negative_int,
    "pipeline.filing_index_type": _choice("company", "form", "master", "xbrl"),
    "log_level": _log_level,
}


@dataclass
class CliConfig:
    values: dict

    def get(self, dotted: str) -> Any:
        node = self.values
        for part in dotted.split("."):
            node = node[part]
        return node

    def client_config(self) -> ClientConfig:
        c = self.values["client"]
        signatures = DEFAULT_RATE_LIMIT_SIGNATURES
        if c["rate_limit_signatures_file"]:
            signatures = load_signatures(c["rate_limit_signatures_file"])
        try:
            return ClientConfig(
                base_url=c["base_url"], user_agent=c["user_agent"],
                max_requests_per_second=c["max_requests_per_second"], max_retries=c["max_retries"],
                backoff_base=c["backoff_base"], timeout=c["timeout"],
                index_path_template=c["index_path_template"],
                company_metadata_url=c["company_metadata_url"],
                rate_limit_signatures=signatures, first_index_year=c["first_index_year"])
        except EdgarCorpusError as exc:
            key = "client.user_agent" if "user_agent" in str(exc) else "client"
            raise ConfigError(key, str(exc)) from exc


def load_signatures(path) -> tuple:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError("client.rate_limit_signatures_file", str(exc)) from exc
    if isinstance(data, dict):
        data = data.get("signatures")
    if not isinstance(data, list) or not all(isinstance(s, str) and s for s in data):
        raise ConfigError("client.rate_limit_signatures_file", "expected a list of marker strings")
    return tuple(data)


def _set(tree: dict, dotted: str, raw) -> None:
    if dotted not in CONVERTERS:
        raise ConfigError(dotted, "unknown configuration key")
    try:
        value = CONVERTERS[dotted](raw) if raw is not None else None
    except (TypeError, ValueError) as exc:
        raise ConfigError(dotted, f"invalid value {raw!r}: {exc}") from None
    node = tree
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node[part]
    node[parts[-1]] = value


def _flatten(data: Mapping, prefix: str = ""):
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            if dotted not in DEFAULTS and prefix == "":
                raise ConfigError(dotted, "unknown configuration section")
            yield from _flatten(value, dotted + ".")
        else:
            yield dotted, value


def load_config(path: Optional[str] = None, env: Optional[Mapping[str, str]] = None,
                overrides: Optional[Mapping[str, Any]] = None, require_client: bool = True) -> CliConfig:
    """Merge and validate configuration; ``require_client`` also validates network settings."""
    tree = copy.deepcopy(DEFAULTS)
    if path:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"{path} is not valid YAML: {exc}") from exc
        if not isinstance(data, Mapping):
            raise ConfigError("config", f"{path} must contain a mapping")
        for dotted, value in _flatten(data):
            _set(tree, dotted, value)
    env = os.environ if env is None else env
    for name, value in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        dotted = name[len(ENV_PREFIX):].lower().replace("__", ".")
        if dotted not in CONVERTERS:
            logging.getLogger(__name__).debug("ignoring environment variable %s", name)
            continue
        _set(tree, dotted, value)
    for dotted, value in (overrides or {}).items():
        if value is not None:
            _set(tree, dotted, value)
    config = CliConfig(tree)
    if require_client:
        config.client_config()
    if config.get("store.backend") == "s3" and not config.get("store.bucket"):
        raise ConfigError("store.bucket", "required when store.backend is s3")
    return config
