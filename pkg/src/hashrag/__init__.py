"""Retrieval-augmented hashtag recommendation.

Retrieve the most similar labeled tweets, merge and re-rank their hashtags
with a frequency-magnified similarity score, and hand the winners plus the
input tweet to a pluggable generator. Ships with overlap metrics, baseline
and ablation modes, and a batch CLI.
"""

from .corpus import (
    Corpus,
    CorpusError,
    CorpusStats,
    LanguageMode,
    TweetHashtagPair,
    corpus_stats,
    hashtag_pool,
    load_corpus,
    normalize_hashtag,
    save_corpus,
    tokenize,
)
from .generator import (
    ChatBackend,
    CopyBackend,
    GeneratorBackendKind,
    GeneratorConfig,
    GeneratorError,
    GeneratorExchange,
    MockBackend,
    PromptVariant,
    parse_output,
    render_chat_prompt,
    render_input,
)
from .metrics import (
    EvalRecord,
    EvalReport,
    evaluate_dataset,
    f1_at_k,
    hashtags_to_sequence,
    rouge_l,
    rouge_n,
)
from .pipeline import (
    AblationMode,
    BaselineMode,
    PipelineConfig,
    RecommendationPipeline,
    RunReport,
    TraceRecord,
)
from .retriever import (
    Embedder,
    EmbeddingProviderError,
    ExternalEmbeddingProvider,
    RetrievalHit,
    RetrieverBackend,
    RetrieverConfig,
    build_dense_index,
    build_sparse_index,
    normalize_hit_scores,
    retrieve,
)
from .selector import (
    CandidateHashtag,
    HardNegativeTriple,
    PerturbationKind,
    SelectorConfig,
    SynonymLexicon,
    aggregate_candidates,
    build_training_triples,
    perturb_hashtag,
    rank_candidates,
    select_top_k,
    selector_loss,
    selector_similarity,
)

__version__ = "0.1.0"
