"""caekit: assurance-case tooling.

Parsing and validation of Claim-Argument-Evidence assurance cases,
structural agreement metrics (per-type count differences and graph edit
distance), multi-hop NLI dataset generation, and rationale-faithfulness
evaluation for black-box entailment scorers.
"""

from .agreement import (
    AgreementReport,
    EmptyGroup,
    aggregate_agreement,
    flat_diff,
    ged_matrix,
    summarize_flat,
)
from .cae import (
    AssuranceCase,
    CaeNode,
    CaseParseError,
    MalformedJson,
    NodeType,
    SchemaViolation,
    StructureViolation,
    ValidationReport,
    Violation,
    count_by_type,
    load_case_file,
    meta_from_filename,
    parse_assurance_case,
    serialize,
    validate,
)
from .faithfulness import (
    AttributionRanking,
    EmptyTokens,
    FaithfulnessRecord,
    MissingRanking,
    aopc,
    comprehensiveness,
    evaluate_corpus,
    occlusion_attribution,
    permutation_test,
    sufficiency,
)
from .ged import GedCostModel, GedResult, ged_approx, ged_exact
from .harness import (
    GenerationOutcome,
    MockChatClient,
    PromptBundle,
    Requirement,
    build_prompt,
    extract_json,
    generate,
    success_rate,
)
from .pairs import (
    NliInstance,
    SamplerConfig,
    SplitSpec,
    UnknownRequirement,
    build_gdpr_nli,
    cae_negatives,
    cae_pairs,
    export_jsonl,
    import_jsonl,
    render_input,
    split_by_requirement,
)
from .scorers import (
    ConstantScorer,
    HttpScorer,
    ProbDist,
    ProtocolError,
    Scorer,
    ScorerHandle,
    ScorerUnavailable,
    ToyOverlapScorer,
    make_scorer,
    score,
)

__version__ = "0.1.0"

__all__ = [
    "AgreementReport",
    "AssuranceCase",
    "AttributionRanking",
    "CaeNode",
    "CaseParseError",
    "ConstantScorer",
    "EmptyGroup",
    "EmptyTokens",
    "FaithfulnessRecord",
    "GedCostModel",
    "GedResult",
    "GenerationOutcome",
    "HttpScorer",
    "MalformedJson",
    "MissingRanking",
    "MockChatClient",
    "NliInstance",
    "NodeType",
    "ProbDist",
    "PromptBundle",
    "ProtocolError",
    "Requirement",
    "SamplerConfig",
    "SchemaViolation",
    "Scorer",
    "ScorerHandle",
    "ScorerUnavailable",
    "SplitSpec",
    "StructureViolation",
    "ToyOverlapScorer",
    "UnknownRequirement",
    "ValidationReport",
    "Violation",
    "aggregate_agreement",
    "aopc",
    "build_gdpr_nli",
    "build_prompt",
    "cae_negatives",
    "cae_pairs",
    "comprehensiveness",
    "count_by_type",
    "evaluate_corpus",
    "export_jsonl",
    "extract_json",
    "flat_diff",
    "ged_approx",
    "ged_exact",
    "ged_matrix",
    "generate",
    "import_jsonl",
    "load_case_file",
    "make_scorer",
    "meta_from_filename",
    "occlusion_attribution",
    "parse_assurance_case",
    "permutation_test",
    "render_input",
    "score",
    "serialize",
    "split_by_requirement",
    "success_rate",
    "sufficiency",
    "summarize_flat",
    "validate",
    "__version__",
]
