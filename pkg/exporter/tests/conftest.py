import os

os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")
os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TOKENIZERS_PARALLELISM", "false")

import numpy as np
import pytest
import torch

from skillex.corpus import Sentence, TaggedCorpus

# Words the tiny tokenizer knows, including pieces so that e.g.
# "alphabeta" splits into ("alpha", "##beta") and "workion" into
# ("work", "##ion").
SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
WORDS = ["alpha", "beta", "gamma", "delta", "work", "team", "python",
         "skill", "code", "plan"]
PIECES = ["##beta", "##ion", "##s"]
VOCAB = SPECIALS + WORDS + PIECES

HIDDEN = 768  # base-size encoder width


def build_tokenizer(save_dir: str):
    from tokenizers import Tokenizer
    from tokenizers.models import WordPiece
    from tokenizers.normalizers import BertNormalizer
    from tokenizers.pre_tokenizers import BertPreTokenizer
    from tokenizers.processors import TemplateProcessing
    from transformers import PreTrainedTokenizerFast

    backend = Tokenizer(WordPiece(
        {piece: i for i, piece in enumerate(VOCAB)},
        unk_token="[UNK]", continuing_subword_prefix="##"))
    backend.normalizer = BertNormalizer(lowercase=False)
    backend.pre_tokenizer = BertPreTokenizer()
    backend.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]", pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", VOCAB.index("[CLS]")),
                        ("[SEP]", VOCAB.index("[SEP]"))])
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=backend, unk_token="[UNK]", pad_token="[PAD]",
        cls_token="[CLS]", sep_token="[SEP]", mask_token="[MASK]")
    tokenizer.save_pretrained(save_dir)
    return tokenizer


def build_model(save_dir: str, num_labels: int = 3) -> None:
    from transformers import BertConfig, BertForTokenClassification

    torch.manual_seed(42)
    labels = {0: "B", 1: "I", 2: "O"} if num_labels == 3 else {
        i: f"LABEL_{i}" for i in range(num_labels)}
    config = BertConfig(
        vocab_size=len(VOCAB), hidden_size=HIDDEN, num_hidden_layers=1,
        num_attention_heads=12, intermediate_size=256,
        max_position_embeddings=64, num_labels=num_labels,
        id2label=labels, label2id={v: k for k, v in labels.items()})
    model = BertForTokenClassification(config)
    model.save_pretrained(save_dir)


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("tiny-encoder")
    build_tokenizer(str(path))
    build_model(str(path))
    return str(path)


@pytest.fixture(scope="session")
def five_label_model_dir(tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("five-label-encoder")
    build_tokenizer(str(path))
    build_model(str(path), num_labels=5)
    return str(path)


def make_corpus(rng: np.random.Generator, n_sentences: int,
                name: str = "export") -> TaggedCorpus:
    """Random BIO corpus over the tiny tokenizer's vocabulary.

    Mixes single-piece words with multi-piece ones ("alphabeta",
    "workion", "plans") so subword pooling is exercised.
    """
    pool = WORDS + ["alphabeta", "workion", "plans"]
    sentences = []
    for _ in range(n_sentences):
        length = int(rng.integers(2, 9))
        tokens = tuple(pool[i] for i in rng.integers(0, len(pool), size=length))
        tags = []
        i = 0
        while i < length:
            if rng.random() < 0.3:
                span_len = int(rng.integers(1, min(3, length - i) + 1))
                tags.append("B")
                tags.extend("I" * (span_len - 1))
                i += span_len
            else:
                tags.append("O")
                i += 1
        sentences.append(Sentence(tokens, tuple(tags)))
    return TaggedCorpus(tuple(sentences), name=name)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
