"""Reading and writing the binary embedding container, plus corpus alignment.

Container layout (little-endian): magic ``SKV1``, u32 dims, u64 rows, then
rows x dims float32 values in row-major order.  The same container carries
per-token label distributions when dims == 3 (columns B, I, O).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .corpus import TaggedCorpus
from .errors import AlignmentError, DataError, FormatError

MAGIC = b"SKV1"
_HEADER = struct.Struct("<4sIQ")

ROW_SUM_TOLERANCE = 1e-6


class EmbeddingMatrix:
    """A read-only (rows x dims) float32 matrix of token vectors."""

    def __init__(self, data: np.ndarray):
        arr = np.ascontiguousarray(data, dtype=np.float32)
        if arr.ndim != 2:
            raise DataError(f"embedding matrix must be 2-D, got {arr.ndim}-D")
        if arr.shape[1] < 1:
            raise DataError("embedding matrix needs at least one column")
        if not np.isfinite(arr).all():
            raise DataError("embedding matrix contains NaN or Inf")
        arr.setflags(write=False)
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def rows(self) -> int:
        return self._data.shape[0]

    @property
    def dims(self) -> int:
        return self._data.shape[1]

    def __len__(self) -> int:
        return self.rows

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return self._data.shape == other._data.shape and bool(
            np.array_equal(self._data, other._data)
        )


class DistributionTable(EmbeddingMatrix):
    """Per-token label distributions: three columns (B, I, O) per row.

    Every row must be a probability vector: entries in [0, 1] and summing to
    1 within ``ROW_SUM_TOLERANCE``.
    """

    def __init__(self, data: np.ndarray):
        super().__init__(data)
        arr = self._data
        if arr.shape[1] != 3:
            raise DataError(f"distribution table must have 3 columns, got {arr.shape[1]}")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            bad = int(np.argwhere((arr < 0.0) | (arr > 1.0))[0][0])
            raise DataError(f"row {bad} holds a value outside [0, 1]")
        sums = arr.sum(axis=1, dtype=np.float64)
        off = np.abs(sums - 1.0) > ROW_SUM_TOLERANCE
        if off.any():
            bad = int(np.argmax(off))
            raise DataError(
                f"row {bad} sums to {sums[bad]:.8f}, expected 1 within {ROW_SUM_TOLERANCE}"
            )


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file: expected {n} bytes of {what}, got {len(buf)}")
    return buf


def _write_container(fh: BinaryIO, data: np.ndarray) -> None:
    rows, dims = data.shape
    fh.write(_HEADER.pack(MAGIC, dims, rows))
    fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def _read_container(fh: BinaryIO) -> np.ndarray:
    raw = _read_exact(fh, _HEADER.size, "header")
    magic, dims, rows = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if dims < 1:
        raise FormatError(f"header declares {dims} dims")
    payload = _read_exact(fh, rows * dims * 4, "float32 payload")
    if fh.read(1):
        raise FormatError("trailing bytes after declared payload")
    values = np.frombuffer(payload, dtype="<f4").reshape(rows, dims)
    return values.astype(np.float32, copy=True)


def write_embeddings(matrix: EmbeddingMatrix, path: str | os.PathLike) -> None:
    """Serialize a matrix to ``path`` in the SKV1 container format."""
    with open(path, "wb") as fh:
        _write_container(fh, matrix.data)


def read_embeddings(path: str | os.PathLike) -> EmbeddingMatrix:
    """Read an SKV1 container; rejects bad magic, truncation, and NaN/Inf."""
    with open(path, "rb") as fh:
        return EmbeddingMatrix(_read_container(fh))


def write_distributions(table: DistributionTable, path: str | os.PathLike) -> None:
    """Serialize a distribution table (same container, dims == 3)."""
    write_embeddings(table, path)


def read_distributions(path: str | os.PathLike) -> DistributionTable:
    """Read a distribution table, enforcing the 3-column probability contract."""
    with open(path, "rb") as fh:
        values = _read_container(fh)
    if values.shape[1] != 3:
        raise FormatError(f"distribution container must have dims == 3, got {values.shape[1]}")
    return DistributionTable(values)


@dataclass(frozen=True)
class Aligned:
    """A corpus zipped with its token-level matrices.

    ``offsets[i]`` is the row where sentence ``i`` starts; rows are assigned
    to tokens in corpus order.
    """

    corpus: TaggedCorpus
    embeddings: EmbeddingMatrix
    distributions: DistributionTable | None
    offsets: tuple[int, ...]

    def sentence_rows(self, i: int) -> tuple[int, int]:
        """Half-open row range of sentence ``i``."""
        start = self.offsets[i]
        return start, start + len(self.corpus.sentences[i])

    def sentence_embeddings(self, i: int) -> np.ndarray:
        start, stop = self.sentence_rows(i)
        return self.embeddings.data[start:stop]

    def sentence_distributions(self, i: int) -> np.ndarray:
        if self.distributions is None:
            raise AlignmentError("no distribution table attached")
        start, stop = self.sentence_rows(i)
        return self.distributions.data[start:stop]


def align(corpus: TaggedCorpus, embeddings: EmbeddingMatrix,
          distributions: DistributionTable | None = None) -> Aligned:
    """Pair a corpus with token matrices, checking counts before use.

    Raises :class:`AlignmentError` naming both counts when the corpus token
    total and a matrix row count disagree.
    """
    n_tokens = corpus.n_tokens
    if embeddings.rows != n_tokens:
        raise AlignmentError(
            f"corpus has {n_tokens} tokens but embedding matrix has "
            f"{embeddings.rows} rows"
        )
    if distributions is not None and distributions.rows != n_tokens:
        raise AlignmentError(
            f"corpus has {n_tokens} tokens but distribution table has "
            f"{distributions.rows} rows"
        )
    offsets = []
    pos = 0
    for sentence in corpus:
        offsets.append(pos)
        pos += len(sentence)
    return Aligned(corpus, embeddings, distributions, tuple(offsets))
