"""
Output helpers shared by the CLI commands.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any, Optional, Union

from pydantic import BaseModel


def _plain(payload: Any) -> Any:
    if isinstance(payload, BaseModel):
        return payload.model_dump(mode="json")
    if isinstance(payload, (list, tuple)):
        return [_plain(item) for item in payload]
    if isinstance(payload, dict):
        return {key: _plain(value) for key, value in payload.items()}
    return payload


def dumps(payload: Any) -> str:
    return json.dumps(_plain(payload), indent=2, sort_keys=True, ensure_ascii=False)


def write_json(path: Union[str, Path], payload: Any) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(dumps(payload) + "\n", encoding="utf-8")
    return target


def emit(payload: Any, out: Optional[Union[str, Path]] = None) -> None:
    """Write JSON to ``out`` when given, otherwise to stdout."""
    if out:
        write_json(out, payload)
        print(f"✅ Wrote {out}")
    else:
        sys.stdout.write(dumps(payload) + "\n")


def error_record(exc: BaseException) -> str:
    """One-line machine-parsable error record."""
    details = getattr(exc, "details", None) or getattr(exc, "offenders", None) or []
    return json.dumps(
        {"error": type(exc).__name__, "message": str(exc), "details": [str(d) for d in details]},
        sort_keys=True,
        ensure_ascii=False,
    )
