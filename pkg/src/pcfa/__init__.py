"""Discrimination-pattern auditing for probabilistic circuit classifiers."""

__version__ = "0.1.0"

from .circuit import (
    Assignment,
    Circuit,
    DecisionBranches,
    Leaf,
    Product,
    Schema,
    StructureReport,
    Sum,
    Variable,
    as_assignment,
    conditional_decision,
    marginal,
    parse_circuit,
    validate_structure,
    write_circuit,
)
from .errors import (
    DatasetError,
    EnumerationCapExceeded,
    IncompatibleStructure,
    IncompleteInput,
    InfeasibleRepair,
    ParseError,
    PCError,
    SchemaError,
    StructureError,
    ZeroEvidence,
)
from .learn import (
    Dataset,
    LearnConfig,
    chow_liu_edges,
    learn_chow_liu,
    learn_naive_bayes,
    load_dataset,
    mutual_information,
)
from .patterns import Pattern, PatternSet, ScoredPattern, pattern
from .scores import (
    discrimination_score,
    divergence_score,
    pattern_probability,
    relative_score,
    score_pattern,
)
from .bounds import (
    BoundQuery,
    RatioMemo,
    best_ratio,
    discrimination_ub,
    divergence_ub,
    extreme_conditional,
    relative_ub,
)
from .search import (
    CertifyResult,
    SearchConfig,
    SearchStats,
    certify_fair,
    find_all_patterns,
    find_topk,
    search_space_size,
)
from .sampling import (
    EstimatorTable,
    RunRecord,
    SamplerConfig,
    sample_patterns_basic,
    sample_patterns_memo,
)
from .summaries import (
    CandidateSet,
    ParetoFront,
    candidate_minimal,
    maximal_patterns,
    minimal_patterns,
    pareto_front,
)
from .metrics import MetricsReport, equalized_odds, group_fairness_report
