"""
Shared option resolution for CLI commands.

Each helper trims its input, accepts a small alias table and raises
ConfigError naming the allowed values.
"""

from __future__ import annotations

from typing import Optional

from cli.config import ConfigError
from core.findings import ALL_FINDINGS, INDEXED_ORGANS, UnknownOrganError, normalize_organ
from retrieval.evaluation import ALL_MODALITIES
from retrieval.pipelines import STRATEGIES

# Aliases accepted on the command line and in config files.
MODALITY_ALIASES = {
    "i2i": "img2img",
    "i2t": "img2txt",
    "t2t": "txt2txt",
    "upper_bound": "upper",
    "upper-bound": "upper",
    "oracle": "upper",
}

STRATEGY_ALIASES = {
    "two-stage": "twostage",
    "two_stage": "twostage",
    "t2t": "text2text",
}


def normalize_option(value: Optional[str]) -> Optional[str]:
    """Trim and lower-case; empty strings are treated as omitted."""
    if value is None:
        return None
    normalized = value.strip().lower()
    return normalized or None


def _split(value: Optional[str]) -> list[str]:
    return [part for part in (normalize_option(p) for p in (value or "").split(",")) if part]


def resolve_modalities(value: Optional[str]) -> list[str]:
    """Comma list of modalities; omitted or ``all`` means every modality."""
    parts = _split(value)
    if not parts or parts == ["all"]:
        return list(ALL_MODALITIES)
    resolved = []
    for part in parts:
        modality = MODALITY_ALIASES.get(part, part)
        if modality not in ALL_MODALITIES:
            raise ConfigError(
                f"Invalid modality '{part}'. Allowed values: {', '.join(ALL_MODALITIES)}.",
                [f"modality: {part}"],
            )
        if modality not in resolved:
            resolved.append(modality)
    return resolved


def resolve_strategy(value: Optional[str]) -> Optional[str]:
    part = normalize_option(value)
    if part is None:
        return None
    strategy = STRATEGY_ALIASES.get(part, part)
    if strategy not in STRATEGIES:
        raise ConfigError(
            f"Invalid strategy '{value}'. Allowed values: {', '.join(STRATEGIES)}.",
            [f"retrieval.strategy: {value}"],
        )
    return strategy


def resolve_organ(value: Optional[str]) -> str:
    try:
        return normalize_organ(value, indexed_only=True)
    except UnknownOrganError as exc:
        raise ConfigError(str(exc), [f"organ: {value}"]) from exc


def resolve_organs(value: Optional[str]) -> list[str]:
    """Comma list of indexed organs; omitted or ``all`` means all four."""
    parts = _split(value)
    if not parts or parts == ["all"]:
        return list(INDEXED_ORGANS)
    organs = [resolve_organ(p) for p in parts]
    return [o for i, o in enumerate(organs) if o not in organs[:i]]


def resolve_findings(value: Optional[str]) -> list[str]:
    """Comma list of finding names (case-insensitive); omitted means all."""
    if not value or value.strip().lower() == "all":
        return list(ALL_FINDINGS)
    by_lower = {f.lower(): f for f in ALL_FINDINGS}
    resolved = []
    for part in (p.strip() for p in value.split(",")):
        if not part:
            continue
        if part.lower() not in by_lower:
            raise ConfigError(f"Unknown finding '{part}'.", [f"findings: {part}"])
        resolved.append(by_lower[part.lower()])
    return resolved
