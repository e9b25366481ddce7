"""
Lumen — Decoding policies.

String forms, used by the CLI and config files:
  norag | fixed:N | adaptive:K | adaptive-nocontext:K
"""

from __future__ import annotations

from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field

POLICY_FORMS = ("norag", "fixed:N", "adaptive:K", "adaptive-nocontext:K")


class NoRag(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["norag"] = "norag"


class FixedInterval(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["fixed"] = "fixed"
    n: int = Field(ge=1)


class Adaptive(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["adaptive"] = "adaptive"
    k_rag_max: int = Field(4, ge=0)
    # False records triggers but never retrieves or injects.
    with_context: bool = True


DecodePolicy = Annotated[Union[NoRag, FixedInterval, Adaptive], Field(discriminator="kind")]


def parse_policy(value: str) -> Union[NoRag, FixedInterval, Adaptive]:
    text = value.strip().lower()
    name, _, arg = text.partition(":")
    try:
        if name == "norag" and not arg:
            return NoRag()
        if name == "fixed" and arg:
            n = int(arg)
            if n < 1:
                raise ValueError("fixed interval must be at least 1")
            return FixedInterval(n=n)
        if name in ("adaptive", "adaptive-nocontext"):
            k = int(arg) if arg else 4
            if k < 0:
                raise ValueError("k_rag_max cannot be negative")
            return Adaptive(k_rag_max=k, with_context=name == "adaptive")
    except ValueError as exc:
        raise ValueError(f"Invalid policy '{value}': {exc}. Allowed forms: {', '.join(POLICY_FORMS)}.") from exc
    raise ValueError(f"Invalid policy '{value}'. Allowed forms: {', '.join(POLICY_FORMS)}.")


def policy_label(policy: Union[NoRag, FixedInterval, Adaptive]) -> str:
    if isinstance(policy, FixedInterval):
        return f"fixed:{policy.n}"
    if isinstance(policy, Adaptive):
        prefix = "adaptive" if policy.with_context else "adaptive-nocontext"
        return f"{prefix}:{policy.k_rag_max}"
    return "norag"
