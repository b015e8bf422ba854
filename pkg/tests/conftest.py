import numpy as np
import pytest

from skillex.corpus import Sentence, TaggedCorpus
from skillex.embedio import DistributionTable, EmbeddingMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def make_random_corpus(rng, n_sentences=10, max_len=12, span_prob=0.35,
                       name="rand", vocab_size=40) -> TaggedCorpus:
    """A random corpus with well-formed BIO tags (every span opens with B)."""
    vocab = [f"tok{i}" for i in range(vocab_size)]
    sentences = []
    for _ in range(n_sentences):
        length = int(rng.integers(1, max_len + 1))
        tokens = tuple(vocab[i] for i in rng.integers(0, vocab_size, size=length))
        tags = []
        i = 0
        while i < length:
            if rng.random() < span_prob:
                span_len = int(rng.integers(1, min(4, length - i) + 1))
                tags.append("B")
                tags.extend("I" * (span_len - 1))
                i += span_len
            else:
                tags.append("O")
                i += 1
        sentences.append(Sentence(tokens, tuple(tags)))
    return TaggedCorpus(tuple(sentences), name=name)


def random_embeddings(rng, rows, dims) -> EmbeddingMatrix:
    return EmbeddingMatrix(rng.normal(size=(rows, dims)).astype(np.float32))


def random_distributions(rng, rows) -> DistributionTable:
    logits = rng.normal(size=(rows, 3))
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    return DistributionTable(probs.astype(np.float32))


@pytest.fixture
def corpus_factory():
    return make_random_corpus


@pytest.fixture
def embeddings_factory():
    return random_embeddings


@pytest.fixture
def distributions_factory():
    return random_distributions
