"""
Lumen — Binary embedding files and label tables.

AEMB layout (little-endian):
    magic  b"AEMB"
    version  uint32
    n        uint64
    d        uint32
    payload  n*d float32, row-major

Ids live in a sidecar ``<stem>.ids`` next to the payload, one per line.
Label tables are CSV: ``study_id,<finding>,<finding>,...`` then 0/1 rows.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Union

import numpy as np

from core.matrix import EmbeddingMatrix, LabelTable, LabelTableError, NonFiniteError

PathLike = Union[str, Path]

AEMB_MAGIC = b"AEMB"
AEMB_VERSION = 1
_HEADER = struct.Struct("<4sIQI")


# ── Errors ───────────────────────────────────────────────────────────────────

class EmbeddingLoadError(ValueError):
    """Base class for unreadable embedding files."""


class HeaderError(EmbeddingLoadError):
    """Bad magic, unsupported version, or payload size not matching n·d."""


class IdCountError(EmbeddingLoadError):
    """Sidecar id count differs from the header's row count."""


class EmbeddingNonFiniteError(EmbeddingLoadError, NonFiniteError):
    """Payload contains NaN or infinite values."""


def sidecar_path(path: PathLike) -> Path:
    return Path(path).with_suffix(".ids")


# ── Embeddings ───────────────────────────────────────────────────────────────

def save_embeddings(m: EmbeddingMatrix, path: PathLike) -> Path:
    """Write ``m`` as an AEMB file plus its id sidecar. Returns the payload path."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    payload = np.ascontiguousarray(m.data, dtype="<f4")
    if not np.isfinite(payload).all():
        raise NonFiniteError(f"{target.name}: values overflow float32.")
    with open(target, "wb") as f:
        f.write(_HEADER.pack(AEMB_MAGIC, AEMB_VERSION, m.n, m.dim))
        f.write(payload.tobytes(order="C"))
    with open(sidecar_path(target), "w", encoding="utf-8", newline="\n") as f:
        for record_id in m.ids:
            f.write(f"{record_id}\n")
    return target


def load_embeddings(path: PathLike) -> EmbeddingMatrix:
    """Read an AEMB file and its sidecar into a float64 EmbeddingMatrix."""
    source = Path(path)
    raw = source.read_bytes()
    if len(raw) < _HEADER.size:
        raise HeaderError(f"{source.name}: file shorter than the {_HEADER.size}-byte header.")
    magic, version, n, d = _HEADER.unpack_from(raw, 0)
    if magic != AEMB_MAGIC:
        raise HeaderError(f"{source.name}: bad magic {magic!r}.")
    if version != AEMB_VERSION:
        raise HeaderError(f"{source.name}: unsupported format version {version}.")
    if d < 1:
        raise HeaderError(f"{source.name}: dimension must be positive.")
    expected = n * d * 4
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise HeaderError(
            f"{source.name}: payload is {len(payload)} bytes, header implies {expected} (n={n}, d={d})."
        )

    ids_file = sidecar_path(source)
    if not ids_file.exists():
        raise IdCountError(f"{source.name}: missing id sidecar {ids_file.name}.")
    ids = [line.rstrip("\r\n") for line in ids_file.read_text(encoding="utf-8").splitlines()]
    ids = [record_id for record_id in ids if record_id]
    if len(ids) != n:
        raise IdCountError(f"{source.name}: header says n={n} but sidecar has {len(ids)} ids.")

    data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(n, d)
    if not np.isfinite(data).all():
        raise EmbeddingNonFiniteError(f"{source.name}: payload contains non-finite values.")
    return EmbeddingMatrix(ids=tuple(ids), data=data)


# ── Labels ───────────────────────────────────────────────────────────────────

def save_labels(table: LabelTable, path: PathLike) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["study_id", *table.findings])
        for record_id, row in zip(table.ids, table.matrix):
            writer.writerow([record_id, *(int(v) for v in row)])
    return target


def load_labels(path: PathLike) -> LabelTable:
    source = Path(path)
    with open(source, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise LabelTableError(f"{source.name}: empty label file.") from None
        if len(header) < 2:
            raise LabelTableError(f"{source.name}: header needs an id column and at least one finding.")
        findings = [name.strip() for name in header[1:]]
        ids: list[str] = []
        rows: list[list[int]] = []
        for line_no, row in enumerate(reader, start=2):  # row 1 = header
            if not row:
                continue
            if len(row) != len(header):
                raise LabelTableError(f"{source.name}:{line_no}: expected {len(header)} fields, got {len(row)}.")
            try:
                values = [int(v) for v in row[1:]]
            except ValueError:
                raise LabelTableError(f"{source.name}:{line_no}: non-integer label value.") from None
            ids.append(row[0].strip())
            rows.append(values)
    matrix = np.array(rows, dtype=np.int8).reshape(len(ids), len(findings))
    return LabelTable(ids=tuple(ids), findings=tuple(findings), matrix=matrix)
