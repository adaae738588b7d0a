"""Reference-grounding annotation toolkit for asymmetric map-pair dialogue."""

from .analysis import (
    ALIGNED,
    MISUNDERSTOOD,
    ChainRecord,
    StateDistribution,
    UnderstandingState,
    chain_stats,
    derive_state,
    distribution,
    extract_chains,
    misunderstanding_by_type,
    pending,
    side_neutral_key,
    ttg_cdf,
    turns_to_ground,
)
from .annotation import (
    AnnotationRecord,
    AttributeCascade,
    ValidationDiagnostic,
    applicable_attributes,
    emit_output_schema,
    validate_record,
)
from .corpus import (
    Corpus,
    Dialogue,
    DialogueMove,
    MapLandmarkInstance,
    MoveType,
    MtlmKey,
    ReferenceExpressionSpan,
    SpeakerRole,
    TimedUnit,
    Transaction,
    context_slice,
    ingest_corpus,
    validate_corpus,
)
from .evaluation import (
    AttributeMetrics,
    EvalReport,
    GoldRecord,
    attribute_metrics,
    evaluate,
    grounded_id_metrics,
    re_level_errors,
)
from .landmarks import (
    DiscrepancyType,
    LandmarkRefSet,
    LexicalVariantRegistry,
    MapPairIndex,
    UnifiedLandmarkId,
    assign_unified_ids,
    build_indexes,
    canonical_name,
    classify_discrepancy,
    format_ref_set,
    format_umlm,
    landmark_candidates,
    mtlm_key,
    parse_ref_set,
    parse_umlm,
)

__version__ = "0.1.0"
