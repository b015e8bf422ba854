"""BIO-tagged corpora: CoNLL parsing, span extraction, and corpus statistics.

Tag types ("B-Skill", "B-Knowledge", ...) are stripped to the bare prefixes
B / I / O on ingest: every downstream consumer works on untyped spans.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import ParseError

VALID_TAGS = ("B", "I", "O")


@dataclass(frozen=True)
class Sentence:
    """A tokenized sentence with one BIO tag per token."""

    tokens: tuple[str, ...]
    tags: tuple[str, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("sentence must contain at least one token")
        if len(self.tokens) != len(self.tags):
            raise ValueError(
                f"{len(self.tokens)} tokens but {len(self.tags)} tags"
            )
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"token {tok!r} is empty or contains whitespace")
        for tag in self.tags:
            if tag not in VALID_TAGS:
                raise ValueError(f"tag {tag!r} is not one of B/I/O")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class TaggedCorpus:
    """An ordered collection of sentences, optionally named after its source."""

    sentences: tuple[Sentence, ...]
    name: str = ""

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


@dataclass(frozen=True)
class SpanSet:
    """Non-overlapping (start, end) token spans of one sentence, both inclusive."""

    n_tokens: int
    spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n_tokens < 0:
            raise ValueError("n_tokens must be >= 0")
        prev_end = -1
        for start, end in self.spans:
            if not (0 <= start <= end < self.n_tokens):
                raise ValueError(f"span ({start}, {end}) out of range")
            if start <= prev_end:
                raise ValueError("spans must be sorted and non-overlapping")
            prev_end = end

    def __len__(self) -> int:
        return len(self.spans)


@dataclass(frozen=True)
class JaccardResult:
    intersection: int
    union: int
    coefficient: float


@dataclass(frozen=True)
class CorpusStats:
    sentences: int
    tokens: int
    spans: int
    mean_span_length: float


@dataclass(frozen=True)
class FrequencyBuckets:
    """Partition of span training counts into four labeled ranges.

    ``bounds`` holds the inclusive upper edge of the first three buckets; the
    fourth bucket is open-ended.  Defaults follow the long-tail analysis
    grouping: 0-3, 4-6, 7-10, and 11 or more occurrences.
    """

    bounds: tuple[int, int, int] = (3, 6, 10)
    labels: tuple[str, str, str, str] = ("low", "mid-low", "mid-high", "high")

    def __post_init__(self):
        if sorted(set(self.bounds)) != list(self.bounds):
            raise ValueError("bounds must be strictly increasing")
        if self.bounds[0] < 0:
            raise ValueError("bounds must be non-negative")
        if len(set(self.labels)) != 4:
            raise ValueError("labels must be four distinct names")

    def bucket_of(self, count: int) -> str:
        """Return the label of the bucket that ``count`` falls into."""
        if count < 0:
            raise ValueError("count must be >= 0")
        for bound, label in zip(self.bounds, self.labels):
            if count <= bound:
                return label
        return self.labels[3]


DEFAULT_BUCKETS = FrequencyBuckets()


def _normalize_tag(raw: str, lineno: int) -> str:
    prefix = raw.split("-", 1)[0]
    if prefix not in VALID_TAGS:
        raise ParseError(f"line {lineno}: unknown tag prefix in {raw!r}")
    return prefix


def parse_conll(text: str, merge_nested: bool = False, name: str = "") -> TaggedCorpus:
    """Parse token-per-line CoNLL text into a :class:`TaggedCorpus`.

    Lines hold a token plus one or two whitespace-separated tag columns;
    blank lines separate sentences.  With two tag columns the pair is merged
    into a single tag stream: ``merge_nested`` gives the first (skills)
    column priority on conflicts, otherwise the second column wins; either
    way a lone non-O tag survives the merge.
    """
    sentences: list[Sentence] = []
    tokens: list[str] = []
    tags: list[str] = []

    def flush():
        if tokens:
            sentences.append(Sentence(tuple(tokens), tuple(tags)))
            tokens.clear()
            tags.clear()

    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            flush()
            continue
        if len(fields) == 2:
            tag = _normalize_tag(fields[1], lineno)
        elif len(fields) == 3:
            first = _normalize_tag(fields[1], lineno)
            second = _normalize_tag(fields[2], lineno)
            if merge_nested:
                tag = first if first != "O" else second
            else:
                tag = second if second != "O" else first
        else:
            raise ParseError(
                f"line {lineno}: expected a token and 1-2 tag columns, "
                f"got {len(fields)} fields"
            )
        tokens.append(fields[0])
        tags.append(tag)
    flush()
    return TaggedCorpus(tuple(sentences), name=name)


def load_conll(path: str | os.PathLike, merge_nested: bool = False,
               name: str | None = None) -> TaggedCorpus:
    """Read and parse a CoNLL file; the corpus is named after the file stem."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if name is None:
        name = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return parse_conll(text, merge_nested=merge_nested, name=name)


def serialize_conll(corpus: TaggedCorpus) -> str:
    """Render a corpus back to token-per-line text (single tag column)."""
    blocks = []
    for sentence in corpus:
        blocks.append(
            "\n".join(f"{tok}\t{tag}" for tok, tag in zip(sentence.tokens, sentence.tags))
        )
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def repair_bio(tags: Iterable[str]) -> tuple[str, ...]:
    """Rewrite a tag sequence so every span opens with B.

    An I with no live span to attach to (sentence start, or right after an O)
    is promoted to B rather than dropped.
    """
    out: list[str] = []
    open_span = False
    for tag in tags:
        if tag == "I" and not open_span:
            tag = "B"
        out.append(tag)
        open_span = tag in ("B", "I")
    return tuple(out)


def extract_spans(sentence: Sentence) -> SpanSet:
    """Collect the (start, end) spans encoded by a sentence's BIO tags.

    B always opens a new span; an I with no open span opens one too (the
    same repair rule as :func:`repair_bio`), so malformed sequences still
    yield well-formed spans.
    """
    spans: list[tuple[int, int]] = []
    start: int | None = None
    for i, tag in enumerate(sentence.tags):
        if tag == "B":
            if start is not None:
                spans.append((start, i - 1))
            start = i
        elif tag == "I":
            if start is None:
                start = i
        else:
            if start is not None:
                spans.append((start, i - 1))
                start = None
    if start is not None:
        spans.append((start, len(sentence) - 1))
    return SpanSet(len(sentence), tuple(spans))


def spans_to_tags(span_set: SpanSet) -> tuple[str, ...]:
    """Inverse of :func:`extract_spans` for well-formed span sets."""
    tags = ["O"] * span_set.n_tokens
    for start, end in span_set.spans:
        tags[start] = "B"
        for i in range(start + 1, end + 1):
            tags[i] = "I"
    return tuple(tags)


def span_surface(sentence: Sentence, span: tuple[int, int]) -> str:
    """Lowercased, whitespace-normalized surface text of one span."""
    start, end = span
    return " ".join(sentence.tokens[start:end + 1]).lower()


def unique_span_surfaces(corpus: TaggedCorpus) -> set[str]:
    """The set of distinct normalized span texts occurring in a corpus."""
    surfaces: set[str] = set()
    for sentence in corpus:
        for span in extract_spans(sentence).spans:
            surfaces.add(span_surface(sentence, span))
    return surfaces


def span_frequency_index(corpus: TaggedCorpus) -> dict[str, int]:
    """Map each normalized span surface to its occurrence count in ``corpus``."""
    counts: Counter[str] = Counter()
    for sentence in corpus:
        for span in extract_spans(sentence).spans:
            counts[span_surface(sentence, span)] += 1
    return dict(counts)


def jaccard_overlap(a: Iterable[str], b: Iterable[str]) -> JaccardResult:
    """Jaccard coefficient of two span-surface sets.

    Two empty sets overlap vacuously: the coefficient is reported as 1.0 and
    the zero sizes make the degenerate case visible to the caller.
    """
    sa, sb = set(a), set(b)
    inter = len(sa & sb)
    union = len(sa | sb)
    coefficient = inter / union if union else 1.0
    return JaccardResult(inter, union, coefficient)


def corpus_stats(corpus: TaggedCorpus) -> CorpusStats:
    """Sentence/token/span counts plus the mean span length in tokens."""
    n_spans = 0
    span_tokens = 0
    for sentence in corpus:
        for start, end in extract_spans(sentence).spans:
            n_spans += 1
            span_tokens += end - start + 1
    mean_len = span_tokens / n_spans if n_spans else 0.0
    return CorpusStats(len(corpus), corpus.n_tokens, n_spans, mean_len)
