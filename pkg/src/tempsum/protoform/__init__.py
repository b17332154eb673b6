"""Rule-based protoform summaries: the ground-truth generator."""

from .catalog import (
    LEXICONS,
    PLACEHOLDERS,
    SIMPLE_TYPES,
    SUMMARY_TYPES,
    catalog_document,
    catalog_hash,
    placeholder_map,
    write_catalog,
)
from .engine import (
    ConsistencyError,
    SlotFill,
    SummaryInstance,
    build_profile,
    detokenize,
    fill_template,
    generate_summary,
    templatize,
    to_template_tokens,
)
from .fuzzy import (
    FuzzySet,
    ProfileError,
    SummarizerProfile,
    quantifier_truth,
    summarizer_membership,
)
from .mining import (
    IfThenRule,
    InsufficientHistoryError,
    SimilarWeekContext,
    find_similar_weeks,
    mine_if_then_rules,
    slope_change_ratio,
)

SUMMARY_TYPE_NAMES = tuple(SUMMARY_TYPES)
