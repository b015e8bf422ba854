"""Run a pretrained token encoder over a corpus and dump aligned outputs.

One vector is written per word token, in corpus order.  Words that the
tokenizer splits into several subword pieces are pooled — by default the
first piece represents the word, optionally the mean over its pieces.  Label
distributions are the softmax of the model's token-classification logits,
pooled the same way, with columns ordered (B, I, O).

The encoder is used as-is, in eval mode and without gradients; this module
never trains or fine-tunes anything.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import torch

from skillex.corpus import TaggedCorpus, load_conll
from skillex.embedio import DistributionTable, EmbeddingMatrix
from skillex.embedio import write_distributions as _write_distributions
from skillex.embedio import write_embeddings as _write_embeddings

POOLING = ("first", "mean")
LAYERS = ("hidden", "logits-projected")


class ExportError(Exception):
    """A corpus/tokenizer/model combination that cannot be exported."""


@dataclass(frozen=True)
class ExportConfig:
    """Pooling, key layer, and batching settings."""

    pool: str = "first"
    layer: str = "hidden"
    batch_size: int = 32

    def __post_init__(self):
        if self.pool not in POOLING:
            raise ExportError(f"pool must be one of {POOLING}, got {self.pool!r}")
        if self.layer not in LAYERS:
            raise ExportError(f"layer must be one of {LAYERS}, got {self.layer!r}")
        if self.batch_size < 1:
            raise ExportError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class ExportSummary:
    """What an export produced."""

    tokens: int
    sentences: int
    embedding_dims: int
    wrote_distributions: bool


def _label_permutation(id2label) -> tuple[int, int, int]:
    """Model label ids in (B, I, O) output order.

    Falls back to positional order when the model's label names are not
    exactly B/I/O (e.g. the LABEL_0 placeholders of an untuned head).
    """
    by_name = {str(name).upper(): int(idx) for idx, name in id2label.items()}
    if set(by_name) == {"B", "I", "O"}:
        return by_name["B"], by_name["I"], by_name["O"]
    return 0, 1, 2


def _subword_positions(word_ids, sentence, sentence_index: int) -> list[list[int]]:
    """Subword positions per word, erroring on words with no pieces."""
    positions: list[list[int]] = [[] for _ in sentence.tokens]
    for pos, wid in enumerate(word_ids):
        if wid is not None:
            positions[wid].append(pos)
    for word, piece_positions in enumerate(positions):
        if not piece_positions:
            raise ExportError(
                f"sentence {sentence_index}: token {sentence.tokens[word]!r} "
                "produced no subword pieces; cannot align"
            )
    return positions


def _pool(rows: torch.Tensor, positions: list[int], pool: str) -> torch.Tensor:
    if pool == "first":
        return rows[positions[0]]
    return rows[positions].mean(dim=0)


def export_corpus(corpus: TaggedCorpus, tokenizer, model, cfg: ExportConfig,
                  want_distributions: bool) -> tuple[np.ndarray, np.ndarray | None]:
    """Encode a corpus, returning (keys, distributions-or-None) as arrays."""
    if not getattr(tokenizer, "is_fast", False):
        raise ExportError(
            "a fast tokenizer is required (word-level alignment needs word_ids)"
        )
    need_logits = want_distributions or cfg.layer == "logits-projected"
    if need_logits:
        n_labels = int(model.config.num_labels)
        if want_distributions and n_labels != 3:
            raise ExportError(
                f"distributions need a 3-way classification head, "
                f"model has {n_labels} labels"
            )
        perm = _label_permutation(model.config.id2label)

    model.eval()
    key_rows: list[np.ndarray] = []
    logit_rows: list[np.ndarray] = []
    sentences = list(corpus)
    for start in range(0, len(sentences), cfg.batch_size):
        batch = sentences[start:start + cfg.batch_size]
        encoded = tokenizer([list(s.tokens) for s in batch],
                            is_split_into_words=True, padding=True,
                            return_tensors="pt")
        with torch.no_grad():
            if need_logits:
                out = model(**encoded, output_hidden_states=True)
                hidden = out.hidden_states[-1]
                logits = out.logits
            else:
                out = model(**encoded)
                hidden = out.last_hidden_state
        for i, sentence in enumerate(batch):
            positions = _subword_positions(encoded.word_ids(i), sentence,
                                           start + i)
            for piece_positions in positions:
                if cfg.layer == "hidden":
                    key = _pool(hidden[i], piece_positions, cfg.pool)
                else:
                    key = _pool(logits[i], piece_positions, cfg.pool)
                key_rows.append(key.numpy().astype(np.float32, copy=False))
                if want_distributions:
                    row = _pool(logits[i], piece_positions, cfg.pool)
                    logit_rows.append(row.numpy().astype(np.float64))

    keys = np.stack(key_rows)
    dists = None
    if want_distributions:
        raw = np.stack(logit_rows)[:, list(perm)]
        raw -= raw.max(axis=1, keepdims=True)
        np.exp(raw, out=raw)
        raw /= raw.sum(axis=1, keepdims=True)
        dists = raw.astype(np.float32)
    return keys, dists


def _load_model(model_id: str, need_logits: bool):
    from transformers import (AutoModel, AutoModelForTokenClassification,
                              AutoTokenizer)

    tokenizer = AutoTokenizer.from_pretrained(model_id)
    if need_logits:
        model = AutoModelForTokenClassification.from_pretrained(model_id)
    else:
        model = AutoModel.from_pretrained(model_id)
    return tokenizer, model


def export(corpus_path: str | os.PathLike, model_id: str,
           out_embeddings: str | os.PathLike,
           out_distributions: str | os.PathLike | None = None,
           cfg: ExportConfig = ExportConfig()) -> ExportSummary:
    """Encode a CoNLL corpus and write the aligned binary files."""
    corpus = load_conll(corpus_path)
    want_distributions = out_distributions is not None
    tokenizer, model = _load_model(
        str(model_id), want_distributions or cfg.layer == "logits-projected")
    keys, dists = export_corpus(corpus, tokenizer, model, cfg,
                                want_distributions)
    _write_embeddings(EmbeddingMatrix(keys), out_embeddings)
    if dists is not None:
        _write_distributions(DistributionTable(dists), out_distributions)
    return ExportSummary(tokens=corpus.n_tokens, sentences=len(corpus),
                         embedding_dims=int(keys.shape[1]),
                         wrote_distributions=want_distributions)
