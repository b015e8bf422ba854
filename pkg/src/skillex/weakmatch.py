"""Weakly supervised span matching against a skill inventory.

Skills and candidate n-grams are compared by cosine similarity; per sentence
the single best-scoring candidate above the threshold is labeled, B for its
first token and I for the rest.  Skill phrases can be represented three ways:
encoded in isolation (``iso``), as the mean over occurrence vectors
(``aoc``), or as an idf-weighted sum of token vectors (``wse``).
"""

from __future__ import annotations

import logging
import os
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import Sentence, TaggedCorpus
from .embedio import Aligned
from .errors import AlignmentError, DataError, ParameterError, ParseError

log = logging.getLogger(__name__)

METHODS = ("iso", "aoc", "wse")


@dataclass(frozen=True)
class MatchConfig:
    """Candidate generation and acceptance settings."""

    ngram_range: tuple[int, int] = (1, 4)
    threshold: float = 0.8

    def __post_init__(self):
        lo, hi = self.ngram_range
        if lo < 1 or lo > hi:
            raise ParameterError(f"ngram range must satisfy 1 <= lo <= hi, got ({lo}, {hi})")
        if not (0.0 <= self.threshold <= 1.0):
            raise ParameterError(f"threshold must lie in [0, 1], got {self.threshold!r}")


@dataclass(frozen=True)
class SkillRepresentation:
    """One inventory skill's vector under a given representation method."""

    skill_id: str
    method: str
    vector: np.ndarray

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"method must be one of {METHODS}, got {self.method!r}")
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1:
            raise DataError("skill vector must be 1-D")
        if not np.isfinite(vec).all():
            raise DataError(f"skill {self.skill_id!r}: vector contains NaN or Inf")
        if not vec.any():
            raise DataError(f"skill {self.skill_id!r}: vector is all zeros")
        object.__setattr__(self, "vector", vec)


def cosine(a, b) -> float:
    """Cosine similarity of two vectors; zero vectors are rejected."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise AlignmentError(f"vector shapes differ: {va.shape} vs {vb.shape}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise DataError("cosine similarity is undefined for a zero vector")
    return float(va @ vb / (na * nb))


@dataclass(frozen=True)
class IdfTable:
    """Natural-log inverse token frequencies over a corpus.

    ``idf(t) = -log(count(t) / total)``.  Lookups of unseen tokens are
    smoothed with count 1 when ``smooth_unseen`` is set and reported through
    the returned flag (and a debug log line) rather than silently.
    """

    total: int
    counts: Mapping[str, int]
    smooth_unseen: bool = True

    def lookup(self, token: str) -> tuple[float, bool]:
        """Return (idf value, was-the-token-unseen)."""
        n = self.counts.get(token)
        unseen = n is None
        if unseen:
            if not self.smooth_unseen:
                raise DataError(f"token {token!r} not in the idf table")
            log.debug("idf smoothing unseen token %r with count 1", token)
            n = 1
        return float(-np.log(n / self.total)), unseen

    def idf(self, token: str) -> float:
        return self.lookup(token)[0]


def compute_idf(corpus: TaggedCorpus, smooth_unseen: bool = True) -> IdfTable:
    """Count token occurrences over a corpus and wrap them as an IdfTable."""
    if len(corpus) == 0:
        raise DataError("cannot compute idf over an empty corpus")
    counts: Counter[str] = Counter()
    for sentence in corpus:
        counts.update(sentence.tokens)
    return IdfTable(total=corpus.n_tokens, counts=dict(counts),
                    smooth_unseen=smooth_unseen)


def iso_representation(skill_id: str, vector) -> SkillRepresentation:
    """Represent a skill by the vector of its phrase encoded in isolation."""
    return SkillRepresentation(skill_id, "iso", np.asarray(vector, dtype=np.float64))


def aoc_representation(skill_id: str, occurrence_vectors) -> SkillRepresentation:
    """Represent a skill by the mean of its occurrence vectors."""
    arr = np.asarray(occurrence_vectors, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise DataError("aoc needs a non-empty (occurrences x dims) array")
    return SkillRepresentation(skill_id, "aoc", arr.mean(axis=0))


def wse_representation(skill_id: str, tokens: Sequence[str], token_vectors,
                       idf: IdfTable) -> SkillRepresentation:
    """Represent a skill by the idf-weighted sum of its token vectors."""
    arr = np.asarray(token_vectors, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != len(tokens) or not tokens:
        raise DataError("wse needs one vector per phrase token")
    weights = np.array([idf.idf(tok) for tok in tokens], dtype=np.float64)
    unseen = sum(1 for tok in tokens if idf.lookup(tok)[1])
    if unseen:
        log.warning("wse for %r smoothed %d unseen token(s)", skill_id, unseen)
    return SkillRepresentation(skill_id, "wse", weights @ arr)


def generate_ngrams(n_tokens: int, ngram_range: tuple[int, int] = (1, 4)
                    ) -> list[tuple[int, int]]:
    """All (start, end) candidate spans with lengths inside ``ngram_range``.

    Spans are inclusive on both ends and ordered by start position, shorter
    spans first at equal starts.
    """
    lo, hi = ngram_range
    if lo < 1 or lo > hi:
        raise ParameterError(f"ngram range must satisfy 1 <= lo <= hi, got ({lo}, {hi})")
    if n_tokens < 0:
        raise ParameterError("n_tokens must be >= 0")
    out = []
    for start in range(n_tokens):
        for length in range(lo, hi + 1):
            end = start + length - 1
            if end >= n_tokens:
                break
            out.append((start, end))
    return out


def mean_pool_candidates(token_vectors: np.ndarray,
                         candidates: Sequence[tuple[int, int]]) -> np.ndarray:
    """One vector per candidate span: the mean of its token vectors."""
    arr = np.asarray(token_vectors, dtype=np.float64)
    out = np.empty((len(candidates), arr.shape[1]), dtype=np.float64)
    for i, (start, end) in enumerate(candidates):
        out[i] = arr[start:end + 1].mean(axis=0)
    return out


def match_sentence(n_tokens: int, candidates: Sequence[tuple[int, int]],
                   candidate_vectors: np.ndarray,
                   representations: Sequence[SkillRepresentation],
                   cfg: MatchConfig) -> tuple[str, ...]:
    """Label at most one span in a sentence by best cosine against the skills.

    Every candidate scores the maximum cosine over all skill representations;
    the best-scoring candidate is labeled only if it beats the threshold
    strictly.  Score ties go to the leftmost candidate, then the longest.
    """
    if not representations:
        raise ParameterError("need at least one skill representation")
    tags = ["O"] * n_tokens
    if not candidates:
        return tuple(tags)
    vectors = np.asarray(candidate_vectors, dtype=np.float64)
    if vectors.shape[0] != len(candidates):
        raise AlignmentError(
            f"{len(candidates)} candidates but {vectors.shape[0]} vectors"
        )
    rep_matrix = np.stack([r.vector for r in representations])
    rep_norms = np.linalg.norm(rep_matrix, axis=1)
    vec_norms = np.linalg.norm(vectors, axis=1)
    if (vec_norms == 0.0).any():
        bad = int(np.argmax(vec_norms == 0.0))
        raise DataError(f"candidate {candidates[bad]} pooled to a zero vector")
    scores = (vectors @ rep_matrix.T) / (vec_norms[:, None] * rep_norms[None, :])
    scores = scores.max(axis=1)

    best_score = -np.inf
    best_span: tuple[int, int] | None = None
    order = sorted(range(len(candidates)),
                   key=lambda i: (candidates[i][0], candidates[i][1] - candidates[i][0]))
    for i in order:
        score = float(scores[i])
        span = candidates[i]
        better = score > best_score
        if not better and score == best_score and best_span is not None:
            # Same score: keep the leftmost; at the same start take the longer.
            better = span[0] == best_span[0] and span[1] > best_span[1]
        if better:
            best_score = score
            best_span = span

    if best_span is not None and best_score > cfg.threshold:
        start, end = best_span
        tags[start] = "B"
        for i in range(start + 1, end + 1):
            tags[i] = "I"
    return tuple(tags)


def match_corpus(aligned: Aligned, representations: Sequence[SkillRepresentation],
                 cfg: MatchConfig) -> TaggedCorpus:
    """Run weak matching over every sentence of an aligned corpus.

    Candidate n-grams are pooled by averaging the sentence's token vectors.
    """
    sentences = []
    for i, sentence in enumerate(aligned.corpus):
        cands = generate_ngrams(len(sentence), cfg.ngram_range)
        vectors = mean_pool_candidates(aligned.sentence_embeddings(i), cands)
        tags = match_sentence(len(sentence), cands, vectors, representations, cfg)
        sentences.append(Sentence(sentence.tokens, tags))
    return TaggedCorpus(tuple(sentences), name=aligned.corpus.name)


# -- inventory files -----------------------------------------------------------

def read_inventory(path: str | os.PathLike) -> list[tuple[str, str]]:
    """Read a skill inventory: one ``id<TAB>title`` record per line."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ParseError(f"line {lineno}: expected 'id<TAB>title'")
            records.append((parts[0], parts[1]))
    return records


def read_representation_ids(path: str | os.PathLike) -> list[str]:
    """Read the sidecar id list naming each representation row."""
    with open(path, "r", encoding="utf-8") as fh:
        ids = [line.strip() for line in fh if line.strip()]
    return ids


def levenshtein(a: str, b: str) -> int:
    """Edit distance (insert / delete / substitute, all cost 1)."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            ))
        previous = current
    return previous[len(b)]


def levenshtein_best_match(query: str, titles: Sequence[str]) -> tuple[str, int]:
    """The inventory title nearest to ``query`` by edit distance.

    An exact match returns immediately; otherwise the minimum-distance title
    wins, first occurrence breaking ties.
    """
    if not titles:
        raise ParameterError("cannot match against an empty title list")
    best_title = None
    best_distance = None
    for title in titles:
        distance = levenshtein(query, title)
        if distance == 0:
            return title, 0
        if best_distance is None or distance < best_distance:
            best_title, best_distance = title, distance
    return best_title, best_distance
