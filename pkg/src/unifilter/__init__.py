"""Unified quality filtering for multimodal pretraining corpora.

Build labeled semi-synthetic quality data over four levels, train a single
regressor that scores both image-text captions and interleaved documents,
then filter, pack, and report on a corpus with it.  Pure numpy/scipy; every
step is seeded and byte-reproducible.
"""

from .classifier import (
    ModelConfig,
    QualityModel,
    TrainConfig,
    load_model,
    save_model,
    train,
)
from .clustering import (
    EmbeddingMatrix,
    KMeansConfig,
    KMeansResult,
    SampleConfig,
    doc_embedding,
    image_embedding,
    kmeans,
    sample_per_cluster,
)
from .common import DataError, NumericError, SchemaError, __version__, child_rng
from .encoder import EncoderConfig, adaptive_avg_pool_2d, image_tokens
from .filtering import (
    CorpusStats,
    FilterConfig,
    corpus_stats,
    dfn_filter_corpus,
    dfn_filter_doc,
    score_corpus,
    select_top_fraction,
    threshold_for_fraction,
    throughput_bench,
)
from .metrics import EvalReport, evaluate, quantize_score
from .packing import Vocab, build_vocab, flatten_doc, pack, tokenize, write_packed
from .records import (
    CaptionSample,
    DocItem,
    ImagePayload,
    InterleavedDoc,
    LabeledSample,
    ScoredRecord,
    read_records,
    write_records,
)
from .synthgen import (
    GeneratorRequest,
    MockConfig,
    MockGenerator,
    build_dataset,
    build_prompt,
    keyword_overlap_label,
    make_mock_benchmark,
    make_mock_sources,
)

__all__ = [
    "CaptionSample",
    "CorpusStats",
    "DataError",
    "DocItem",
    "EmbeddingMatrix",
    "EncoderConfig",
    "EvalReport",
    "FilterConfig",
    "GeneratorRequest",
    "ImagePayload",
    "InterleavedDoc",
    "KMeansConfig",
    "KMeansResult",
    "LabeledSample",
    "MockConfig",
    "MockGenerator",
    "ModelConfig",
    "NumericError",
    "QualityModel",
    "SampleConfig",
    "SchemaError",
    "ScoredRecord",
    "TrainConfig",
    "Vocab",
    "__version__",
    "adaptive_avg_pool_2d",
    "build_dataset",
    "build_prompt",
    "build_vocab",
    "child_rng",
    "corpus_stats",
    "dfn_filter_corpus",
    "dfn_filter_doc",
    "doc_embedding",
    "evaluate",
    "flatten_doc",
    "image_embedding",
    "image_tokens",
    "keyword_overlap_label",
    "kmeans",
    "load_model",
    "make_mock_benchmark",
    "make_mock_sources",
    "pack",
    "quantize_score",
    "read_records",
    "sample_per_cluster",
    "save_model",
    "score_corpus",
    "select_top_fraction",
    "threshold_for_fraction",
    "throughput_bench",
    "tokenize",
    "train",
    "write_packed",
    "write_records",
]
