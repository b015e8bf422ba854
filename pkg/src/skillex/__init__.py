"""Retrieval-augmented occupational skill extraction.

The package covers the full desk loop: parse BIO-tagged job-posting corpora,
store whitened token embeddings in a searchable datastore, blend retrieved
tag evidence into a base tagger's distributions, and score the resulting
spans strictly, loosely, and along the long tail.
"""

__version__ = "0.1.0"

from .corpus import (CorpusStats, FrequencyBuckets, JaccardResult, Sentence,
                     SpanSet, TaggedCorpus, corpus_stats, extract_spans,
                     jaccard_overlap, load_conll, parse_conll,
                     span_frequency_index)
from .datastore import Datastore, DatastoreEntry, IvfIndex
from .embedio import (Aligned, DistributionTable, EmbeddingMatrix, align,
                      read_distributions, read_embeddings, write_distributions,
                      write_embeddings)
from .errors import (AlignmentError, DataError, FormatError, ParameterError,
                     ParseError, SkillexError, StateError)
from .evaluation import EvalReport, bucketed_f1, evaluate, evaluate_corpora
from .inference import (KnnConfig, LabelDistribution, decode, grid_search,
                        interpolate, knn_distribution, predict)
from .weakmatch import (IdfTable, MatchConfig, SkillRepresentation, compute_idf,
                        cosine, levenshtein_best_match, match_corpus)
from .whitening import WhiteningModel
