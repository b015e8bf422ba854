"""Retrieval-augmented sequence tagging.

Per token: retrieve the k nearest datastore entries, turn the retrieved tags
into a distribution by a temperature softmax over negative squared distances,
mix it with the tagger's own distribution, and decode by argmax plus BIO
repair.  Tags absent from the retrieved neighbors get exactly zero retrieval
mass.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import Sentence, TaggedCorpus, extract_spans, repair_bio
from .datastore import CODE_TAGS, TAG_CODES, Datastore
from .embedio import Aligned
from .errors import AlignmentError, ParameterError, ParseError
from .evaluation import EvalReport, evaluate

_TAG_INDEX = {"B": 0, "I": 1, "O": 2}


@dataclass(frozen=True)
class KnnConfig:
    """Retrieval settings: neighbor count, softmax temperature, mixing weight.

    ``nprobe`` selects how many inverted lists an indexed search scans;
    ``None`` means an exact flat scan.
    """

    k: int = 8
    temperature: float = 1.0
    interpolation: float = 0.5
    nprobe: int | None = None

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 1:
            raise ParameterError(f"k must be a positive integer, got {self.k!r}")
        if not (self.temperature > 0 and np.isfinite(self.temperature)):
            raise ParameterError(f"temperature must be finite and > 0, got {self.temperature!r}")
        if not (0.0 <= self.interpolation <= 1.0):
            raise ParameterError(
                f"interpolation weight must lie in [0, 1], got {self.interpolation!r}"
            )
        if self.nprobe is not None and (not isinstance(self.nprobe, int) or self.nprobe < 1):
            raise ParameterError(f"nprobe must be a positive integer, got {self.nprobe!r}")


@dataclass(frozen=True)
class LabelDistribution:
    """A probability distribution over the three tags."""

    p_b: float
    p_i: float
    p_o: float

    def __post_init__(self):
        total = self.p_b + self.p_i + self.p_o
        if min(self.p_b, self.p_i, self.p_o) < 0.0 or abs(total - 1.0) > 1e-9:
            raise ParameterError(
                f"not a distribution: ({self.p_b}, {self.p_i}, {self.p_o})"
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.p_b, self.p_i, self.p_o], dtype=np.float64)


def _neighbor_mass(dists: np.ndarray, codes: np.ndarray, temperature: float) -> np.ndarray:
    """Rows of retrieval tag mass from (n x k) neighbor distances and codes.

    Weights are exp(-d / T) normalized per row; each row is shifted by its
    minimum distance first, which cancels in the normalization but keeps the
    exponentials well inside float range.
    """
    shifted = dists - dists.min(axis=1, keepdims=True)
    weights = np.exp(-shifted / temperature)
    out = np.empty((dists.shape[0], 3), dtype=np.float64)
    for code in range(3):
        out[:, code] = np.where(codes == code, weights, 0.0).sum(axis=1)
    out /= out.sum(axis=1, keepdims=True)
    return out


def knn_distribution(neighbors: Sequence[tuple], temperature: float) -> LabelDistribution:
    """Turn a retrieved neighbor list into a tag distribution.

    ``neighbors`` holds (squared distance, tag, ...) tuples as returned by
    the datastore searches.  Tags that never occur among the neighbors get
    probability exactly 0.
    """
    if not (temperature > 0 and np.isfinite(temperature)):
        raise ParameterError(f"temperature must be finite and > 0, got {temperature!r}")
    if not neighbors:
        raise ParameterError("neighbor list is empty; retrieval must supply k >= 1 hits")
    dists = np.array([[n[0] for n in neighbors]], dtype=np.float64)
    codes = np.array([[_TAG_INDEX[n[1]] for n in neighbors]], dtype=np.uint8)
    row = _neighbor_mass(dists, codes, temperature)[0]
    return LabelDistribution(*map(float, row))


def interpolate(p_base: LabelDistribution, p_retrieval: LabelDistribution,
                weight: float) -> LabelDistribution:
    """Mix two tag distributions: weight on retrieval, remainder on the base.

    At weight 0 the result reproduces ``p_base`` bit for bit; at weight 1 it
    reproduces ``p_retrieval``.
    """
    if not (0.0 <= weight <= 1.0):
        raise ParameterError(f"interpolation weight must lie in [0, 1], got {weight!r}")
    w, v = weight, 1.0 - weight
    return LabelDistribution(
        w * p_retrieval.p_b + v * p_base.p_b,
        w * p_retrieval.p_i + v * p_base.p_i,
        w * p_retrieval.p_o + v * p_base.p_o,
    )


def _decode_rows(probs: np.ndarray) -> tuple[str, ...]:
    codes = np.argmax(probs, axis=1)  # first max wins: B beats I beats O
    return repair_bio(CODE_TAGS[c] for c in codes)


def decode(distributions: Sequence[LabelDistribution]) -> tuple[str, ...]:
    """Argmax-decode one sentence's distributions into repaired BIO tags.

    Exact probability ties resolve toward B, then I, then O.
    """
    if not distributions:
        raise ParameterError("cannot decode an empty sentence")
    probs = np.stack([d.as_array() for d in distributions])
    return _decode_rows(probs)


def _mixed_probs(aligned: Aligned, store: Datastore, cfg: KnnConfig) -> np.ndarray:
    base = aligned.distributions.data.astype(np.float64)
    mass = _retrieval_mass(aligned, store, cfg.k, cfg.temperature, cfg.nprobe)
    return cfg.interpolation * mass + (1.0 - cfg.interpolation) * base


def _retrieval_mass(aligned: Aligned, store: Datastore, k: int,
                    temperature: float, nprobe: int | None) -> np.ndarray:
    dists, codes, _ = store.search_batch(aligned.embeddings.data, k, nprobe)
    return _neighbor_mass(dists, codes, temperature)


def _corpus_from_rows(corpus: TaggedCorpus, offsets: Sequence[int],
                      probs: np.ndarray) -> TaggedCorpus:
    sentences = []
    for i, sentence in enumerate(corpus):
        start = offsets[i]
        tags = _decode_rows(probs[start:start + len(sentence)])
        sentences.append(Sentence(sentence.tokens, tags))
    return TaggedCorpus(tuple(sentences), name=corpus.name)


def decode_distributions(aligned: Aligned) -> TaggedCorpus:
    """Decode the base tagger's distributions alone (no retrieval)."""
    if aligned.distributions is None:
        raise ParameterError("aligned corpus has no distribution table")
    probs = aligned.distributions.data.astype(np.float64)
    return _corpus_from_rows(aligned.corpus, aligned.offsets, probs)


def predict(aligned: Aligned, store: Datastore, cfg: KnnConfig) -> TaggedCorpus:
    """Tag a corpus with retrieval-augmented decoding.

    ``aligned`` must carry both token embeddings (the queries) and the base
    tagger's distributions.  Queries are whitened inside the store's search
    when the store was built with whitening.
    """
    if aligned.distributions is None:
        raise ParameterError("prediction needs the base tagger's distribution table")
    probs = _mixed_probs(aligned, store, cfg)
    return _corpus_from_rows(aligned.corpus, aligned.offsets, probs)


# -- hyperparameter sweep ------------------------------------------------------

DEFAULT_K_GRID = (4, 8, 16, 32, 64, 128)
DEFAULT_INTERPOLATION_GRID = tuple(round(0.1 + 0.05 * i, 2) for i in range(17))
DEFAULT_TEMPERATURE_GRID = (0.1, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0)

GRID_CSV_HEADER = ("k", "lambda", "T", "precision", "recall", "f1")


@dataclass(frozen=True)
class GridRow:
    k: int
    interpolation: float
    temperature: float
    report: EvalReport


@dataclass(frozen=True)
class GridResult:
    best: KnnConfig
    best_report: EvalReport
    rows: tuple[GridRow, ...]


def grid_search(aligned: Aligned, store: Datastore,
                k_grid: Sequence[int] = DEFAULT_K_GRID,
                interpolation_grid: Sequence[float] = DEFAULT_INTERPOLATION_GRID,
                temperature_grid: Sequence[float] = DEFAULT_TEMPERATURE_GRID,
                nprobe: int | None = None) -> GridResult:
    """Sweep (k, interpolation, temperature), scoring strict span-F1.

    Neighbor lists are retrieved once at the largest k and sliced per cell,
    which reproduces the per-configuration searches exactly; every cell's
    scores therefore equal an independent :func:`predict` run.  The best cell
    wins by F1 with ties going to the smallest k, then the smallest
    interpolation weight, then the smallest temperature.
    """
    if aligned.distributions is None:
        raise ParameterError("grid search needs the base tagger's distribution table")
    if not k_grid or not interpolation_grid or not temperature_grid:
        raise ParameterError("every grid axis needs at least one value")

    ks = sorted(set(int(k) for k in k_grid))
    lams = sorted(set(float(v) for v in interpolation_grid))
    temps = sorted(set(float(t) for t in temperature_grid))
    for k in ks:
        if k < 1:
            raise ParameterError(f"k must be >= 1, got {k}")
    for lam in lams:
        if not (0.0 <= lam <= 1.0):
            raise ParameterError(f"interpolation weight {lam} outside [0, 1]")
    for t in temps:
        if not (t > 0 and np.isfinite(t)):
            raise ParameterError(f"temperature must be finite and > 0, got {t}")

    gold = [extract_spans(s) for s in aligned.corpus]
    base = aligned.distributions.data.astype(np.float64)
    dists, codes, _ = store.search_batch(aligned.embeddings.data, max(ks), nprobe)

    rows: list[GridRow] = []
    best: tuple | None = None
    for k in ks:
        k_eff = min(k, dists.shape[1])
        d_k, c_k = dists[:, :k_eff], codes[:, :k_eff]
        for t in temps:
            mass = _neighbor_mass(d_k, c_k, t)
            for lam in lams:
                probs = lam * mass + (1.0 - lam) * base
                pred = _corpus_from_rows(aligned.corpus, aligned.offsets, probs)
                report = evaluate(gold, [extract_spans(s) for s in pred], "strict")
                rows.append(GridRow(k, lam, t, report))
                key = (report.f1, -k, -lam, -t)
                if best is None or key > best[0]:
                    best = (key, KnnConfig(k, t, lam, nprobe), report)

    rows.sort(key=lambda r: (r.k, r.interpolation, r.temperature))
    return GridResult(best=best[1], best_report=best[2], rows=tuple(rows))


def grid_rows_to_csv(rows: Iterable[GridRow]) -> str:
    """Render sweep rows as CSV with a fixed header and 4-decimal floats."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GRID_CSV_HEADER)
    for row in rows:
        writer.writerow([
            row.k,
            f"{row.interpolation:.4f}",
            f"{row.temperature:.4f}",
            f"{row.report.precision:.4f}",
            f"{row.report.recall:.4f}",
            f"{row.report.f1:.4f}",
        ])
    return buf.getvalue()


# -- prediction files ----------------------------------------------------------

def write_predictions(gold: TaggedCorpus, pred: TaggedCorpus,
                      path: str | os.PathLike) -> None:
    """Write token / gold tag / predicted tag triples, CoNLL style."""
    if len(gold) != len(pred):
        raise AlignmentError(
            f"gold has {len(gold)} sentences but predictions have {len(pred)}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        for g_sent, p_sent in zip(gold, pred):
            if g_sent.tokens != p_sent.tokens:
                raise AlignmentError("gold and predicted sentences disagree on tokens")
            for tok, g, p in zip(g_sent.tokens, g_sent.tags, p_sent.tags):
                fh.write(f"{tok}\t{g}\t{p}\n")
            fh.write("\n")


def read_predictions(path: str | os.PathLike) -> tuple[TaggedCorpus, TaggedCorpus]:
    """Read a prediction file back into (gold, predicted) corpora."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    gold_sents: list[Sentence] = []
    pred_sents: list[Sentence] = []
    tokens: list[str] = []
    gold_tags: list[str] = []
    pred_tags: list[str] = []

    def flush():
        if tokens:
            gold_sents.append(Sentence(tuple(tokens), tuple(gold_tags)))
            pred_sents.append(Sentence(tuple(tokens), tuple(pred_tags)))
            tokens.clear()
            gold_tags.clear()
            pred_tags.clear()

    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            flush()
            continue
        if len(fields) != 3:
            raise ParseError(
                f"line {lineno}: prediction rows need token, gold, predicted"
            )
        for tag in fields[1:]:
            if tag.split("-", 1)[0] not in ("B", "I", "O"):
                raise ParseError(f"line {lineno}: unknown tag prefix in {tag!r}")
        tokens.append(fields[0])
        gold_tags.append(fields[1].split("-", 1)[0])
        pred_tags.append(fields[2].split("-", 1)[0])
    flush()
    name = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return (TaggedCorpus(tuple(gold_sents), name=name),
            TaggedCorpus(tuple(pred_sents), name=name))
