"""Consistency-based uncertainty scoring for long-form LLM generations.

The pipeline consumes a prompt with several sampled responses, scores the
first (anchor) response's sentences against the others with a three-class
NLI service, adaptively keeps, skips, or decomposes each sentence based
on how neutral the evidence is, soft-clusters the surviving units into
semantic themes, and aggregates unit uncertainties with theme-mass
weights into one score per prompt.
"""

from .aggregation import (
    ClusterSummary,
    FinalScore,
    aggregate_global,
    aggregate_literal,
    aggregate_uniform,
    all_skip_fallback,
)
from .clustering import (
    ClusteringConfig,
    GmmFit,
    GmmParams,
    SelectionResult,
    bic,
    fit_gmm,
    kmeans_hard,
    kmeanspp_init,
    reduce_embeddings,
    select_k,
)
from .config import (
    ConfigError,
    PipelineConfig,
    ProviderSpec,
    default_config,
    load_config,
    parse_config_text,
)
from .corpus import (
    DatasetError,
    SampleSet,
    Sentence,
    TextUnit,
    load_dataset,
    segment_sentences,
    split_sentences,
)
from .evaluation import (
    VARIANTS,
    CorrelationReport,
    MethodVariant,
    UndefinedCorrelationError,
    apply_variant,
    compare,
    comparison_table,
    pearson,
    run_variant,
    run_variant_reports,
    spearman,
)
from .pipeline import (
    CorpusSummary,
    PromptFailure,
    PromptReport,
    ProviderBundle,
    TimingBreakdown,
    build_providers,
    report_from_dict,
    report_to_dict,
    run_corpus,
    run_many,
    run_prompt,
)
from .routing import (
    SKIPPED,
    GranularityConfig,
    RoutingDecision,
    RoutingSignal,
    apply_granularity,
    route,
    route_ablation,
)
from .scoring import (
    Chunk,
    NliDistribution,
    ReferenceSet,
    ScoringConfig,
    SupportScore,
    avg_distribution,
    binary_entail,
    make_chunks,
    pair_entail,
    reference_distribution,
    support,
    three_class_softmax,
)

__version__ = "0.1.0"
