"""Holistic evaluation toolkit for generated text.

Surface metrics (BLEU variants, Dist-n, head entropy, content recall),
semantic metrics (N-way retrieval accuracy, Frechet distance), a toy-scale
reference implementation of prompt-guided cross-attention with neural
keys/values, and the pipelines that combine them into reports.
"""

from .corpus import (
    AttributeLabels,
    Condition,
    CorpusFormatError,
    HypothesisSet,
    Sample,
    TokenSequence,
    load_corpus,
    load_hypotheses,
    ngrams,
    tokenize,
)
from .ngram_metrics import (
    BleuConfig,
    StopwordList,
    content_recall,
    corpus_bleu,
    corpus_content_recall,
    dist_n,
    head_entropy,
    self_bleu,
    sentence_bleu,
    strip_prefixes,
)
from .protocol import EvalConfig, MetricReport, render_report
from .semantic_space import (
    EmbeddingMatrix,
    GaussianSummary,
    RetrievalConfig,
    cosine_similarity,
    fetch_embeddings,
    fit_gaussian,
    frechet_distance,
    load_embeddings,
    nway_retrieval_accuracy,
    save_embeddings,
    sqrtm_psd,
)

__version__ = "0.1.0"
