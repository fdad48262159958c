"""Code review comment classification with prompted language models.

A library plus CLI that classifies review comments into a two-level
defect-based taxonomy (5 groups, 17 categories) through flat or
hierarchical prompting, and evaluates classifiers with support-weighted
metrics, baselines, cross-validation, and significance tests.
"""

from .classify import (
    ClassificationError,
    Matched,
    ParseOutcome,
    Prediction,
    RunAborted,
    RunManifest,
    Unparseable,
    UnparseableReason,
    classify_corpus,
    classify_flat,
    classify_hierarchical,
    parse_response,
    read_predictions,
    write_predictions,
)
from .corpus import (
    ClassWeights,
    Corpus,
    CorpusError,
    FoldAssignment,
    ReviewComment,
    class_weights,
    filter_with_code,
    load_corpus,
    save_corpus,
    stratified_kfold,
)
from .gateway import (
    AuthMissing,
    CacheMiss,
    CompletionRecord,
    ExhaustedRetries,
    GatewayError,
    HttpBackend,
    LlmGateway,
    MalformedEndpointReply,
    MockBackend,
    MockScriptMiss,
    ModelConfig,
    ReplayBackend,
    ResponseCache,
    request_fingerprint,
)
from .metrics import (
    CategoryCounts,
    CategoryMetrics,
    ConfusionCounts,
    DeltaReport,
    MetricsError,
    WeightedSummary,
    WilcoxonResult,
    baseline_majority,
    baseline_random,
    category_metrics,
    confusion,
    definition_delta,
    group_accuracy,
    micro_accuracy,
    percent_change,
    random_baseline_expectation,
    significance_stars,
    weighted_summary,
    wilcoxon_signed_rank,
)
from .prompts import (
    ContextMode,
    PromptSpec,
    PromptTemplates,
    RenderedPrompt,
    Strategy,
    load_prompt_templates,
    render_classification_prompt,
    truncate_code,
)
from .reports import (
    EvaluationReport,
    align_predictions,
    build_evaluation_report,
    compare_runs,
    mean_weighted_metrics,
    per_fold_summaries,
)
from .taxonomy import (
    Category,
    CategoryDef,
    DefinitionStyle,
    Group,
    Taxonomy,
    TaxonomyError,
    load_taxonomy,
)

__version__ = "0.1.0"
