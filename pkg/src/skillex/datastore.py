"""The retrieval datastore: (key vector, BIO tag) pairs with exact and
inverted-file search over squared Euclidean distance.

Keys are float32; every distance is accumulated in float64 so the flat scan,
the inverted-file scan, and any brute-force reference produce bit-identical
values for the same rows.  Ties are always broken by ascending entry id.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from . import whitening as _whitening
from .corpus import TaggedCorpus
from .embedio import EmbeddingMatrix, _read_exact, align
from .errors import AlignmentError, FormatError, ParameterError, StateError
from .whitening import WhiteningModel

MAGIC = b"SKDS"
VERSION = 1

TAG_CODES = {"B": 0, "I": 1, "O": 2}
CODE_TAGS = ("B", "I", "O")

DEFAULT_CENTROIDS = 4096
DEFAULT_NPROBE = 32
KMEANS_ITERATIONS = 25

_SCAN_CHUNK = 65536


@dataclass(frozen=True)
class DatastoreEntry:
    """One stored pair plus where it came from."""

    key: np.ndarray
    tag: str
    origin: tuple[str, int, int]  # (dataset name, sentence index, token index)


@dataclass(frozen=True)
class IvfIndex:
    """Coarse quantizer: k-means centroids and one entry-id list per centroid."""

    centroids: np.ndarray           # (n_centroids, dims) float32
    lists: tuple[np.ndarray, ...]   # uint64 entry ids, one array per centroid

    @property
    def n_centroids(self) -> int:
        return self.centroids.shape[0]


def _row_distances(rows: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Squared L2 distance from ``query`` to each row, in float64."""
    diff = rows.astype(np.float64) - query
    return (diff * diff).sum(axis=1)


class Datastore:
    """An ordered collection of (key, tag, origin) entries.

    Build and indexing are single-writer; afterwards the store is treated as
    immutable and may be searched from any number of threads.
    """

    def __init__(self, dims: int, keys: np.ndarray, tags: np.ndarray,
                 dataset_names: tuple[str, ...], origins: np.ndarray,
                 whitening: WhiteningModel | None = None,
                 index: IvfIndex | None = None):
        if keys.shape != (len(tags), dims):
            raise AlignmentError(
                f"keys shape {keys.shape} does not match {len(tags)} entries x {dims} dims"
            )
        if origins.shape != (len(tags), 3):
            raise AlignmentError("origins must be one (dataset, sentence, token) row per entry")
        self.dims = dims
        self.keys = np.ascontiguousarray(keys, dtype=np.float32)
        self.tags = np.ascontiguousarray(tags, dtype=np.uint8)
        self.dataset_names = tuple(dataset_names)
        self.origins = np.ascontiguousarray(origins, dtype=np.uint32)
        self.whitening = whitening
        self.index = index
        self.keys.setflags(write=False)
        self.tags.setflags(write=False)
        self.origins.setflags(write=False)

    def __len__(self) -> int:
        return self.tags.shape[0]

    def entry(self, i: int) -> DatastoreEntry:
        ds, sent, tok = (int(v) for v in self.origins[i])
        return DatastoreEntry(
            key=self.keys[i],
            tag=CODE_TAGS[self.tags[i]],
            origin=(self.dataset_names[ds], sent, tok),
        )

    # -- querying -----------------------------------------------------------

    def _prepare_query(self, query) -> np.ndarray:
        arr = np.asarray(query, dtype=np.float64)
        if arr.ndim != 1:
            raise ParameterError(f"query must be a single vector, got {arr.ndim}-D")
        if arr.shape[0] != self.dims:
            raise AlignmentError(
                f"query width {arr.shape[0]} does not match store width {self.dims}"
            )
        if self.whitening is not None:
            arr = _whitening.apply(self.whitening, arr)
        return arr

    def _scan_all(self, query: np.ndarray) -> np.ndarray:
        out = np.empty(len(self), dtype=np.float64)
        for lo in range(0, len(self), _SCAN_CHUNK):
            hi = min(lo + _SCAN_CHUNK, len(self))
            out[lo:hi] = _row_distances(self.keys[lo:hi], query)
        return out

    def search_flat(self, query, k: int) -> list[tuple[float, str, int]]:
        """Exact k-nearest search: ranked (squared distance, tag, entry id).

        Distance ties rank by ascending entry id; asking for more neighbors
        than the store holds returns every entry.
        """
        if len(self) == 0:
            raise StateError("cannot search an empty datastore")
        if k < 1:
            raise ParameterError(f"k must be >= 1, got {k}")
        q = self._prepare_query(query)
        dists = self._scan_all(q)
        order = np.argsort(dists, kind="stable")[:k]
        return [(float(dists[i]), CODE_TAGS[self.tags[i]], int(i)) for i in order]

    def build_index(self, n_centroids: int = DEFAULT_CENTROIDS, seed: int = 0) -> None:
        """Cluster the keys with k-means and attach inverted lists.

        Runs a fixed number of Lloyd iterations from a seeded init; a cluster
        that empties out is reseeded from the point currently farthest from
        its own centroid, so every centroid always owns at least one entry.
        """
        n = len(self)
        if n == 0:
            raise StateError("cannot index an empty datastore")
        if n_centroids < 1:
            raise ParameterError(f"n_centroids must be >= 1, got {n_centroids}")
        if n_centroids > n:
            raise ParameterError(
                f"n_centroids ({n_centroids}) exceeds the store size ({n})"
            )
        points = self.keys.astype(np.float64)
        rng = np.random.default_rng(seed)
        centroids = points[rng.choice(n, size=n_centroids, replace=False)].copy()

        for _ in range(KMEANS_ITERATIONS):
            assign, best_d = _assign(points, centroids)
            # Reseed empty clusters from the farthest point, one at a time.
            sizes = np.bincount(assign, minlength=n_centroids)
            spare = best_d.copy()
            for c in np.nonzero(sizes == 0)[0]:
                far = int(np.argmax(spare))
                assign[far] = c
                spare[far] = -1.0
            for c in range(n_centroids):
                members = points[assign == c]
                if len(members):
                    centroids[c] = members.mean(axis=0)

        final = centroids.astype(np.float32)
        assign, _ = _assign(points, final.astype(np.float64))
        lists = tuple(
            np.nonzero(assign == c)[0].astype(np.uint64) for c in range(n_centroids)
        )
        self.index = IvfIndex(centroids=final, lists=lists)

    def search_ivf(self, query, k: int, nprobe: int = DEFAULT_NPROBE
                   ) -> list[tuple[float, str, int]]:
        """Approximate search probing the ``nprobe`` nearest inverted lists.

        With ``nprobe`` equal to the centroid count this scans every entry
        exactly once and reproduces :meth:`search_flat` bit for bit.
        """
        if self.index is None:
            raise StateError("store has no index; call build_index first")
        if k < 1:
            raise ParameterError(f"k must be >= 1, got {k}")
        if not (1 <= nprobe <= self.index.n_centroids):
            raise ParameterError(
                f"nprobe must be in [1, {self.index.n_centroids}], got {nprobe}"
            )
        q = self._prepare_query(query)
        cd = _row_distances(self.index.centroids, q)
        probed = np.argsort(cd, kind="stable")[:nprobe]
        candidates = np.concatenate([self.index.lists[c] for c in probed]).astype(np.int64)
        if candidates.size == 0:
            return []
        dists = _row_distances(self.keys[candidates], q)
        order = np.lexsort((candidates, dists))[:k]
        return [
            (float(dists[i]), CODE_TAGS[self.tags[candidates[i]]], int(candidates[i]))
            for i in order
        ]

    def search_batch(self, queries: np.ndarray, k: int,
                     nprobe: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Search many queries at once; ``nprobe`` None means exact flat scan.

        Returns (distances, tag codes, entry ids), each (n_queries x k_eff)
        with k_eff = min(k, store size).  Row ``i`` of each output is exactly
        the per-query search result for query ``i``: the top-k slice of the
        same total (distance, id) order the scalar searches use.
        """
        if len(self) == 0:
            raise StateError("cannot search an empty datastore")
        if k < 1:
            raise ParameterError(f"k must be >= 1, got {k}")
        queries = np.asarray(queries)
        if queries.ndim != 2:
            raise ParameterError("queries must be a 2-D array")
        k_eff = min(k, len(self))
        n = queries.shape[0]
        out_d = np.empty((n, k_eff), dtype=np.float64)
        out_t = np.empty((n, k_eff), dtype=np.uint8)
        out_i = np.empty((n, k_eff), dtype=np.int64)
        for row in range(n):
            if nprobe is None:
                hits = self.search_flat(queries[row], k_eff)
            else:
                hits = self.search_ivf(queries[row], k_eff, nprobe)
            if len(hits) < k_eff:
                raise StateError(
                    f"index returned {len(hits)} candidates for k={k_eff}; "
                    "raise nprobe or rebuild with more balanced lists"
                )
            for col, (d, _tag, idx) in enumerate(hits):
                out_d[row, col] = d
                out_i[row, col] = idx
                out_t[row, col] = self.tags[idx]
        return out_d, out_t, out_i

    # -- persistence ----------------------------------------------------------

    def save(self, path: str | os.PathLike) -> None:
        """Write the store (entries, whitening, index) to ``path``."""
        with open(path, "wb") as fh:
            _write_store(fh, self)


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid assignment (ties -> lowest centroid id) and distances."""
    n = points.shape[0]
    assign = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    c_sq = (centroids * centroids).sum(axis=1)
    chunk = max(1, min(8192, int(2e8 // max(1, centroids.shape[0] * 8))))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        block = points[lo:hi]
        d = block @ centroids.T
        d *= -2.0
        d += c_sq
        d += (block * block).sum(axis=1)[:, None]
        assign[lo:hi] = np.argmin(d, axis=1)
        best[lo:hi] = d[np.arange(hi - lo), assign[lo:hi]]
    np.maximum(best, 0.0, out=best)
    return assign, best


def build(corpora: Sequence[tuple[TaggedCorpus, EmbeddingMatrix]],
          use_whitening: bool = False) -> Datastore:
    """Assemble a datastore from (corpus, embeddings) pairs.

    Every token contributes one entry — O tags included — in corpus order.
    With ``use_whitening`` a whitening model is fitted on the union of all
    raw keys and applied before they are stored; queries against the store
    are whitened with the same model at search time.
    """
    if not corpora:
        raise ParameterError("need at least one (corpus, embeddings) pair")
    dims = corpora[0][1].dims
    names: list[str] = []
    key_blocks: list[np.ndarray] = []
    tag_blocks: list[np.ndarray] = []
    origin_blocks: list[np.ndarray] = []
    for ds_idx, (corpus, matrix) in enumerate(corpora):
        if matrix.dims != dims:
            raise AlignmentError(
                f"embedding widths differ across corpora: {dims} vs {matrix.dims}"
            )
        align(corpus, matrix)  # raises AlignmentError on count mismatch
        names.append(corpus.name)
        key_blocks.append(matrix.data)
        codes = np.fromiter(
            (TAG_CODES[t] for s in corpus for t in s.tags),
            dtype=np.uint8, count=corpus.n_tokens,
        )
        tag_blocks.append(codes)
        rows = np.empty((corpus.n_tokens, 3), dtype=np.uint32)
        pos = 0
        for sent_idx, sentence in enumerate(corpus):
            n = len(sentence)
            rows[pos:pos + n, 0] = ds_idx
            rows[pos:pos + n, 1] = sent_idx
            rows[pos:pos + n, 2] = np.arange(n, dtype=np.uint32)
            pos += n
        origin_blocks.append(rows)

    keys = np.concatenate(key_blocks) if key_blocks else np.empty((0, dims), np.float32)
    tags = np.concatenate(tag_blocks)
    origins = np.concatenate(origin_blocks)

    model = None
    if use_whitening:
        model = _whitening.fit(keys)
        keys = _whitening.apply(model, keys).astype(np.float32)

    return Datastore(dims, keys, tags, tuple(names), origins, whitening=model)


# -- binary layout ------------------------------------------------------------

_STORE_HEADER = struct.Struct("<4sIIQ")  # magic, version, dims, entry count


def _write_store(fh: BinaryIO, store: Datastore) -> None:
    fh.write(_STORE_HEADER.pack(MAGIC, VERSION, store.dims, len(store)))
    fh.write(struct.pack("<I", len(store.dataset_names)))
    for name in store.dataset_names:
        raw = name.encode("utf-8")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
    fh.write(store.tags.tobytes())
    fh.write(np.ascontiguousarray(store.origins, dtype="<u4").tobytes())
    fh.write(np.ascontiguousarray(store.keys, dtype="<f4").tobytes())

    if store.whitening is None:
        fh.write(b"\x00")
    else:
        fh.write(b"\x01")
        fh.write(np.ascontiguousarray(store.whitening.mean, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(store.whitening.transform, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", store.whitening.clamp_count))

    if store.index is None:
        fh.write(b"\x00")
    else:
        fh.write(b"\x01")
        fh.write(struct.pack("<I", store.index.n_centroids))
        fh.write(np.ascontiguousarray(store.index.centroids, dtype="<f4").tobytes())
        for ids in store.index.lists:
            fh.write(struct.pack("<Q", len(ids)))
            fh.write(np.ascontiguousarray(ids, dtype="<u8").tobytes())


def load(path: str | os.PathLike) -> Datastore:
    """Read a datastore file written by :meth:`Datastore.save`."""
    with open(path, "rb") as fh:
        raw = _read_exact(fh, _STORE_HEADER.size, "store header")
        magic, version, dims, count = _STORE_HEADER.unpack(raw)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"unsupported store version {version}")
        (n_names,) = struct.unpack("<I", _read_exact(fh, 4, "name count"))
        names = []
        for _ in range(n_names):
            (ln,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            names.append(_read_exact(fh, ln, "dataset name").decode("utf-8"))

        tags = np.frombuffer(_read_exact(fh, count, "tag bytes"), dtype=np.uint8)
        if tags.size and tags.max() > 2:
            raise FormatError("tag byte outside {0, 1, 2}")
        origins = np.frombuffer(
            _read_exact(fh, count * 12, "origin triples"), dtype="<u4"
        ).reshape(count, 3)
        keys = np.frombuffer(
            _read_exact(fh, count * dims * 4, "key rows"), dtype="<f4"
        ).reshape(count, dims)

        model = None
        flag = _read_exact(fh, 1, "whitening flag")
        if flag == b"\x01":
            mean = np.frombuffer(_read_exact(fh, dims * 8, "whitening mean"), dtype="<f8")
            transform = np.frombuffer(
                _read_exact(fh, dims * dims * 8, "whitening transform"), dtype="<f8"
            ).reshape(dims, dims)
            (clamps,) = struct.unpack("<I", _read_exact(fh, 4, "clamp count"))
            model = WhiteningModel(mean.copy(), transform.copy(), int(clamps))
        elif flag != b"\x00":
            raise FormatError("whitening flag must be 0 or 1")

        index = None
        flag = _read_exact(fh, 1, "index flag")
        if flag == b"\x01":
            (n_centroids,) = struct.unpack("<I", _read_exact(fh, 4, "centroid count"))
            centroids = np.frombuffer(
                _read_exact(fh, n_centroids * dims * 4, "centroids"), dtype="<f4"
            ).reshape(n_centroids, dims)
            lists = []
            for _ in range(n_centroids):
                (ln,) = struct.unpack("<Q", _read_exact(fh, 8, "list length"))
                ids = np.frombuffer(_read_exact(fh, ln * 8, "list ids"), dtype="<u8")
                lists.append(ids.copy())
            index = IvfIndex(centroids.copy(), tuple(lists))
        elif flag != b"\x00":
            raise FormatError("index flag must be 0 or 1")

        if fh.read(1):
            raise FormatError("trailing bytes after declared payload")

    return Datastore(
        dims, keys.copy(), tags.copy(), tuple(names), origins.copy(),
        whitening=model, index=index,
    )
