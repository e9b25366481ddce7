"""
Lumen — Run configuration.

Precedence, lowest first: model defaults (environment-derived), the
``--config`` file (.toml or .json), explicit command-line flags.
"""

from __future__ import annotations

import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from diagnostics.probes import ProbeConfig
from orchestrator.policies import parse_policy
from retrieval.evaluation import DEFAULT_K
from retrieval.pipelines import RetrievalConfig
from synthgen.corpus import SynthConfig
from trainprep.samples import TrainPrepConfig


class ConfigError(ValueError):
    """Invalid configuration or usage; ``details`` lists every offending key."""

    def __init__(self, message: str, details: Optional[list[str]] = None):
        super().__init__(message)
        self.details = details or []


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(0, ge=0, lt=2**64)
    threads: int = Field(1, ge=0)
    log_level: str = os.environ.get("LOG_LEVEL", "WARNING")
    policy: str = "adaptive:4"
    k: int = Field(DEFAULT_K, ge=1)
    retrieval: RetrievalConfig = Field(default_factory=RetrievalConfig)
    trainprep: TrainPrepConfig = Field(default_factory=TrainPrepConfig)
    probe: ProbeConfig = Field(default_factory=ProbeConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)

    @field_validator("policy")
    @classmethod
    def _policy_parses(cls, value: str) -> str:
        parse_policy(value)
        return value.strip().lower()

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        level = value.strip().upper()
        if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"Unknown log level '{value}'.")
        return level

    @property
    def worker_count(self) -> int:
        """``threads`` with 0 resolved to the CPU count."""
        return self.threads or (os.cpu_count() or 1)


def read_config_file(path: Union[str, Path]) -> dict[str, Any]:
    source = Path(path)
    try:
        if source.suffix == ".toml":
            with source.open("rb") as handle:
                return tomllib.load(handle)
        if source.suffix == ".json":
            payload = json.loads(source.read_text(encoding="utf-8"))
            if not isinstance(payload, dict):
                raise ConfigError(f"{source}: top level must be an object.")
            return payload
    except (OSError, tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Cannot read config file {source}: {exc}") from exc
    raise ConfigError(f"{source}: config files must be .toml or .json.")


def _merge(base: dict[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    """Apply dotted-key overrides (``retrieval.k_fine``) onto a nested dict."""
    merged = json.loads(json.dumps(base))
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = merged
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    return merged


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    raw = read_config_file(path) if path else {}
    merged = _merge(raw, overrides or {})
    # The top-level seed feeds every seeded section unless a section sets its own.
    if "seed" in merged:
        for section in ("trainprep", "synth"):
            merged.setdefault(section, {}).setdefault("seed", merged["seed"])
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as exc:
        details = [
            f"{'.'.join(str(part) for part in error['loc']) or '<root>'}: {error['msg']}"
            for error in exc.errors()
        ]
        raise ConfigError(f"{len(details)} invalid configuration value(s).", details) from exc
