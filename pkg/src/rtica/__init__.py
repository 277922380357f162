"""Backward-reasoning detection of missing information in structured
word problems: problem types and DSL, the symbolic reverse engine, an
LLM pipeline, and an evaluation harness."""

__version__ = "0.1.0"

from .engine import (
    DEFAULT_THRESHOLD,
    EQUAL_WEIGHTS,
    AvailabilityStatus,
    ConfidenceWeights,
    DependencyGraph,
    DetectionResult,
    Prerequisite,
    brute_force_oracle,
    build_dependency_graph,
    check_availability,
    confidence_score,
    detect_missing,
    enumerate_prerequisites,
    forward_baseline_detect,
    forward_closure,
)
from .dsl import parse_problem, serialize_problem
from .problem import (
    GroundTruth,
    MissingItem,
    Problem,
    Relation,
    RelationKind,
    Taxonomy,
    extract_goal,
    extract_known,
    make_problem,
)

__all__ = [
    "__version__",
    "AvailabilityStatus",
    "ConfidenceWeights",
    "DEFAULT_THRESHOLD",
    "DependencyGraph",
    "DetectionResult",
    "EQUAL_WEIGHTS",
    "GroundTruth",
    "MissingItem",
    "Prerequisite",
    "Problem",
    "Relation",
    "RelationKind",
    "Taxonomy",
    "brute_force_oracle",
    "build_dependency_graph",
    "check_availability",
    "confidence_score",
    "detect_missing",
    "enumerate_prerequisites",
    "extract_goal",
    "extract_known",
    "forward_baseline_detect",
    "forward_closure",
    "make_problem",
    "parse_problem",
    "serialize_problem",
]
