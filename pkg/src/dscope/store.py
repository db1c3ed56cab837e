"""Binary embedding store, similarity kernels, and a deterministic mock embedder.

Store layout (little-endian): 16-byte magic ``DSCOPE-EMB-V001\\0``, u32
format version, u32 dim, u64 row count, u8 normalized flag, 7 pad bytes,
then row-major float32 payload. Row metadata lives in a separate JSONL
sidecar (``{record_id, date, row}``) with matching row order, so the store
itself stays trivially parseable from any language.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import math
import os
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError

MAGIC = b"DSCOPE-EMB-V001\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<16sIIQB7x")  # magic, version, dim, count, normalized, pad
HEADER_SIZE = _HEADER.size  # 40 bytes

NORM_ATOL = 1e-4  # tolerance of the unit-norm invariant on stored vectors

_DATE_MIN = dt.date(1900, 1, 1)
_DATE_MAX = dt.date(2100, 1, 1)


@dataclass(frozen=True)
class StoreHeader:
    dim: int
    count: int
    normalized: bool
    version: int = FORMAT_VERSION


@dataclass(frozen=True)
class TweetRecord:
    """Sidecar metadata for one store row."""

    record_id: str
    date: dt.date
    row: int

    def __post_init__(self):
        if not _DATE_MIN <= self.date <= _DATE_MAX:
            raise ValueError(f"date {self.date} outside [{_DATE_MIN}, {_DATE_MAX}]")
        if self.row < 0:
            raise ValueError(f"row index must be non-negative, got {self.row}")


def sidecar_path(store_path: str | Path) -> Path:
    return Path(str(store_path) + ".meta.jsonl")


def _check_vectors(matrix: np.ndarray, normalized: bool) -> None:
    if not np.all(np.isfinite(matrix)):
        raise DataError("vectors contain NaN or Inf components")
    if normalized and matrix.shape[0]:
        norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_ATOL)
        if bad.size:
            raise DataError(
                f"{bad.size} row(s) violate the unit-norm invariant "
                f"(first offender: row {bad[0]}, norm {norms[bad[0]]:.6f})"
            )


def write_store(
    vectors: np.ndarray | Sequence[np.ndarray],
    path: str | Path,
    meta: Sequence[TweetRecord] | None = None,
    normalized: bool = False,
) -> None:
    """Write vectors (and optional sidecar metadata) to ``path``.

    Rows must share one dim and be finite; with ``normalized`` set every row
    must already be unit-norm within 1e-4. The file is written to a temp
    name and renamed, so a failed write never leaves a partial store behind.
    """
    path = Path(path)
    if isinstance(vectors, np.ndarray):
        matrix = np.asarray(vectors, dtype=np.float32)
        if matrix.ndim == 1:
            matrix = matrix.reshape(1, -1)
        if matrix.ndim != 2:
            raise DataError(f"expected a 2-D matrix of vectors, got ndim={matrix.ndim}")
    else:
        rows = [np.asarray(v, dtype=np.float32).reshape(-1) for v in vectors]
        dims = {r.shape[0] for r in rows}
        if len(dims) > 1:
            raise DataError(f"mixed vector dims: {sorted(dims)}")
        matrix = np.stack(rows) if rows else np.empty((0, 0), dtype=np.float32)
    count, dim = matrix.shape
    if meta is not None and len(meta) != count:
        raise DataError(f"metadata length {len(meta)} != vector count {count}")
    _check_vectors(matrix, normalized)

    tmp = path.with_name(path.name + ".tmp")
    try:
        with tmp.open("wb") as fh:
            fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, dim, count, int(normalized)))
            fh.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())
        os.replace(tmp, path)
    except OSError:
        tmp.unlink(missing_ok=True)
        raise
    if meta is not None:
        write_sidecar(meta, sidecar_path(path))


def write_sidecar(records: Sequence[TweetRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {"record_id": rec.record_id, "date": rec.date.isoformat(), "row": rec.row},
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def load_sidecar(path: str | Path, count: int | None = None) -> list[TweetRecord]:
    """Read sidecar metadata; ``count`` enables the row-bound check."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"sidecar file not found: {path}")
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                record = TweetRecord(
                    record_id=str(rec["record_id"]),
                    date=dt.date.fromisoformat(rec["date"]),
                    row=int(rec["row"]),
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DataError(f"{path}: malformed sidecar line {lineno}: {exc}") from exc
            if count is not None and record.row >= count:
                raise DataError(f"{path}: line {lineno} row {record.row} >= store count {count}")
            records.append(record)
    return records


def read_store_header(path: str | Path) -> StoreHeader:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"store file not found: {path}")
    size = path.stat().st_size
    if size < HEADER_SIZE:
        raise DataError(f"{path}: file too small for a store header ({size} bytes)")
    with path.open("rb") as fh:
        magic, version, dim, count, normalized = _HEADER.unpack(fh.read(HEADER_SIZE))
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}; not an embedding store")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    expected = HEADER_SIZE + count * dim * 4
    if size != expected:
        raise DataError(
            f"{path}: truncated or oversized payload: expected {expected} bytes, found {size}"
        )
    return StoreHeader(dim=dim, count=count, normalized=bool(normalized))


def read_store_chunks(
    path: str | Path, chunk_size: int | None = None
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (start_row, float32 matrix) chunks in row order.

    Only one chunk is resident at a time, so memory stays bounded by the
    chunk byte size regardless of store size.
    """
    header = read_store_header(path)
    if chunk_size is not None and chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    rows_per_chunk = chunk_size if chunk_size is not None else max(header.count, 1)
    with Path(path).open("rb") as fh:
        fh.seek(HEADER_SIZE)
        start = 0
        while start < header.count:
            n = min(rows_per_chunk, header.count - start)
            raw = fh.read(n * header.dim * 4)
            if len(raw) != n * header.dim * 4:
                raise DataError(
                    f"{path}: truncated read at row {start}: expected "
                    f"{n * header.dim * 4} bytes, got {len(raw)}"
                )
            yield start, np.frombuffer(raw, dtype="<f4").reshape(n, header.dim)
            start += n


def read_store(
    path: str | Path, chunk_size: int | None = None
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (row index, vector) pairs in row order; chunking is invisible."""
    for start, chunk in read_store_chunks(path, chunk_size):
        for offset in range(chunk.shape[0]):
            yield start + offset, chunk[offset]


def load_store(path: str | Path) -> tuple[StoreHeader, np.ndarray]:
    """Read an entire store into memory. Convenience for desk-scale data."""
    header = read_store_header(path)
    chunks = [chunk for _, chunk in read_store_chunks(path)]
    matrix = chunks[0] if chunks else np.empty((0, header.dim), dtype=np.float32)
    return header, matrix


# --- vector kernels ---------------------------------------------------------


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale ``v`` to unit L2 norm (float32). Zero vectors are an error."""
    v64 = np.asarray(v, dtype=np.float64).reshape(-1)
    norm = np.linalg.norm(v64)
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return (v64 / norm).astype(np.float32)


def distance(a: np.ndarray, b: np.ndarray, metric: str = "cosine") -> float:
    """Pairwise distance under cosine, euclidean, or manhattan."""
    a64 = np.asarray(a, dtype=np.float64).reshape(-1)
    b64 = np.asarray(b, dtype=np.float64).reshape(-1)
    if a64.shape != b64.shape:
        raise ValueError(f"dim mismatch: {a64.shape[0]} vs {b64.shape[0]}")
    if metric == "cosine":
        na, nb = np.linalg.norm(a64), np.linalg.norm(b64)
        if na == 0.0 or nb == 0.0:
            raise ValueError("cosine distance undefined for zero vectors")
        return float(1.0 - np.dot(a64, b64) / (na * nb))
    if metric == "euclidean":
        return float(np.linalg.norm(a64 - b64))
    if metric == "manhattan":
        return float(np.abs(a64 - b64).sum())
    raise ValueError(f"unknown metric {metric!r}")


# --- deterministic mock embedder --------------------------------------------


@lru_cache(maxsize=65536)
def _token_direction(token: str, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}\x1f{dim}\x1f{token}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:16], "little"))
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    direction.setflags(write=False)
    return direction


def mock_embed(text: str, dim: int, seed: int, noise: float = 0.3) -> np.ndarray:
    """Hash-based stand-in for a sentence encoder; unit norm, reproducible.

    The first whitespace token acts as the topic: it seeds a base direction
    that contributes with weight ``1 - noise``, while the remaining tokens
    are mixed into a noise direction with weight ``noise``. Texts sharing a
    topic token therefore land close in cosine similarity, with separability
    controlled by ``noise``.
    """
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    if not 0.0 <= noise < 1.0:
        raise ValueError(f"noise must be in [0, 1), got {noise}")
    tokens = text.split() or [""]
    base = _token_direction(tokens[0], dim, seed)
    if len(tokens) > 1:
        acc = np.zeros(dim)
        for tok in tokens[1:]:
            acc += _token_direction(tok, dim, seed)
        norm = np.linalg.norm(acc)
        if norm > 0.0:
            vec = (1.0 - noise) * base + noise * (acc / norm)
        else:  # pragma: no cover - opposing directions cancelling exactly
            vec = base.copy()
    else:
        vec = base.copy()
    return l2_normalize(vec)
