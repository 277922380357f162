"""Backward-reasoning engine: dependency graph, prerequisite enumeration,
availability verification with confidence gating, and the two reference
detectors (forward-closure baseline and exhaustive oracle).

All operations are pure functions of immutable inputs; per-run counters
live in the returned result, never in globals.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional

from .errors import DepthLimitExceeded, InvalidWeights, TooLarge
from .problem import (
    MissingItem,
    Problem,
    RelationId,
    Taxonomy,
    VariableId,
    extract_goal,
)

DEFAULT_MAX_DEPTH = 64
DEFAULT_THRESHOLD = Fraction(1, 2)

#: Description used when a detector knows something is missing but cannot
#: localize it (the forward baseline, binary-classification mode).
GENERIC_GAP_DESCRIPTION = "unspecified missing information"


def as_fraction(x) -> Fraction:
    """Coerce thresholds/weights to exact rationals; floats go through
    their decimal string so 0.41 means 41/100."""
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


class AvailabilityStatus(str, Enum):
    EXPLICITLY_PROVIDED = "explicitly_provided"
    DERIVABLE = "derivable"
    ALREADY_MISSING = "already_missing"
    POTENTIALLY_MISSING = "potentially_missing"


@dataclass(frozen=True)
class ConfidenceWeights:
    """Weights for the three availability evidence scores."""

    semantic: Fraction
    syntactic: Fraction
    contextual: Fraction

    def __post_init__(self):
        w = (self.semantic, self.syntactic, self.contextual)
        if any(x < 0 for x in w) or sum(w) != 1:
            raise InvalidWeights(f"weights must be nonnegative and sum to 1, got {w}")

    @classmethod
    def of(cls, semantic, syntactic, contextual) -> "ConfidenceWeights":
        return cls(as_fraction(semantic), as_fraction(syntactic), as_fraction(contextual))


EQUAL_WEIGHTS = ConfidenceWeights(Fraction(1, 3), Fraction(1, 3), Fraction(1, 3))


@dataclass(frozen=True)
class Prerequisite:
    subject: VariableId
    status: AvailabilityStatus
    confidence: Fraction
    derivation_path: Optional[tuple[RelationId, ...]] = None

    def __post_init__(self):
        if (self.derivation_path is not None) != (self.status is AvailabilityStatus.DERIVABLE):
            raise ValueError("derivation_path present iff status is Derivable")
        if not 0 <= self.confidence <= 1:
            raise ValueError("confidence out of [0, 1]")


@dataclass(frozen=True)
class DependencyGraph:
    nodes: frozenset[VariableId]
    root: VariableId
    edges: tuple[tuple[VariableId, VariableId, RelationId], ...]

    def children(self, node: VariableId) -> tuple[VariableId, ...]:
        return tuple(sorted({to for frm, to, _ in self.edges if frm == node}))

    def incoming_relation(self, node: VariableId) -> Optional[RelationId]:
        """Relation via which ``node`` entered the graph (smallest id)."""
        rels = sorted(via for _, to, via in self.edges if to == node)
        return rels[0] if rels else None


@dataclass(frozen=True)
class DetectionResult:
    i_missing: str  # "yes" | "no"
    missing: tuple[MissingItem, ...]
    prerequisites: tuple[Prerequisite, ...]
    oracle_calls: int

    def __post_init__(self):
        if (self.i_missing == "yes") != bool(self.missing):
            raise ValueError("i_missing must be 'yes' exactly when missing is nonempty")

    @property
    def missing_subjects(self) -> frozenset[str]:
        return frozenset(item.subject for item in self.missing)


# ---------------------------------------------------------------------------
# forward closure

@dataclass
class Closure:
    values: dict[VariableId, Optional[Fraction]]
    firings: list[tuple[RelationId, VariableId]] = field(default_factory=list)
    support: dict[VariableId, tuple[RelationId, tuple[VariableId, ...]]] = field(
        default_factory=dict
    )

    def derivation_path(self, subject: VariableId) -> tuple[RelationId, ...]:
        """Fired relations supporting ``subject``, in firing order."""
        needed: set[RelationId] = set()
        stack = [subject]
        seen: set[VariableId] = set()
        while stack:
            v = stack.pop()
            if v in seen or v not in self.support:
                continue
            seen.add(v)
            rid, inputs = self.support[v]
            needed.add(rid)
            stack.extend(inputs)
        return tuple(rid for rid, _ in self.firings if rid in needed)


def forward_closure(p: Problem, extra: Iterable[VariableId] = ()) -> Closure:
    """Saturate the knowns (plus ``extra`` hypothetically-valued variables)
    over determinate relations. A relation fires when all but one operand
    is valued; a generic function fires only toward its output.
    Deterministic: relations tried in sorted-id order each pass.
    """
    values: dict[VariableId, Optional[Fraction]] = dict(p.known)
    for v in extra:
        values.setdefault(v, None)
    closure = Closure(values=values)
    rels = sorted(p.relations, key=lambda r: r.id)
    changed = True
    while changed:
        changed = False
        for rel in rels:
            unvalued = [o for o in rel.operands if o not in values]
            if len(unvalued) != 1:
                continue
            target = unvalued[0]
            if not rel.can_determine(target):
                continue
            ok, value = rel.solve(target, values)
            if not ok:
                continue  # arithmetic undefined (e.g. division by zero)
            values[target] = value
            closure.firings.append((rel.id, target))
            closure.support[target] = (rel.id, rel.inputs_for(target))
            changed = True
    return closure


# ---------------------------------------------------------------------------
# dependency graph

def build_dependency_graph(p: Problem) -> DependencyGraph:
    """Breadth-first backward expansion from the goal.

    For every relation that can determine a node, edges run from the node
    to each other operand of that relation (its prerequisites).
    """
    root = extract_goal(p)
    rels = sorted(p.relations, key=lambda r: r.id)
    nodes: set[VariableId] = {root}
    edges: list[tuple[VariableId, VariableId, RelationId]] = []
    edge_set: set[tuple[VariableId, VariableId, RelationId]] = set()
    queue: list[VariableId] = [root]
    visited: set[VariableId] = set()
    while queue:
        node = queue.pop(0)
        if node in visited:
            continue
        visited.add(node)
        children: set[VariableId] = set()
        for rel in rels:
            if not rel.can_determine(node):
                continue
            for other in rel.inputs_for(node):
                children.add(other)
                edge = (node, other, rel.id)
                if edge not in edge_set:
                    edge_set.add(edge)
                    edges.append(edge)
        for child in sorted(children):
            nodes.add(child)
            if child not in visited:
                queue.append(child)
    return DependencyGraph(nodes=frozenset(nodes), root=root, edges=tuple(edges))


# ---------------------------------------------------------------------------
# availability + confidence

def check_availability(
    subject: VariableId,
    p: Problem,
    missing_so_far: Iterable[VariableId] = (),
) -> tuple[AvailabilityStatus, Optional[tuple[RelationId, ...]]]:
    """Classify one prerequisite. Check order: explicitly known, derivable
    by forward closure of the knowns, already covered by the accumulated
    missing set (membership, or derivable once those gaps were filled),
    else potentially missing.
    """
    missing = set(missing_so_far)
    if subject in p.known:
        return AvailabilityStatus.EXPLICITLY_PROVIDED, None
    closure = forward_closure(p)
    if subject in closure.values:
        return AvailabilityStatus.DERIVABLE, closure.derivation_path(subject)
    if subject in missing:
        return AvailabilityStatus.ALREADY_MISSING, None
    if missing:
        hypothetical = forward_closure(p, extra=missing)
        if subject in hypothetical.values:
            return AvailabilityStatus.ALREADY_MISSING, None
    return AvailabilityStatus.POTENTIALLY_MISSING, None


def confidence_score(
    subject: VariableId,
    status: AvailabilityStatus,
    p: Problem,
    w: ConfidenceWeights = EQUAL_WEIGHTS,
) -> Fraction:
    """Weighted sum of the three symbolic evidence scores.

    semantic: the subject is explicitly stated; syntactic: some relation
    could determine it; contextual: its availability is accounted for
    (provided, derivable, or already covered by flagged gaps).
    """
    s_semantic = 1 if subject in p.known else 0
    s_syntactic = 1 if any(r.can_determine(subject) for r in p.relations) else 0
    s_contextual = (
        1
        if status
        in (
            AvailabilityStatus.EXPLICITLY_PROVIDED,
            AvailabilityStatus.DERIVABLE,
            AvailabilityStatus.ALREADY_MISSING,
        )
        else 0
    )
    return w.semantic * s_semantic + w.syntactic * s_syntactic + w.contextual * s_contextual


# ---------------------------------------------------------------------------
# prerequisite enumeration and detection

def _enumeration_order(
    g: DependencyGraph,
    p: Problem,
    max_depth: int,
    enumeration_depth: Optional[int] = None,
) -> list[VariableId]:
    """FIFO expansion from the goal; nodes in the knowns are recorded but
    never expanded; each node enumerated at most once."""
    order: list[VariableId] = []
    seen: set[VariableId] = set()
    queue: list[tuple[VariableId, int]] = [(g.root, 0)]
    while queue:
        node, depth = queue.pop(0)
        if node in seen:
            continue
        if depth > max_depth:
            raise DepthLimitExceeded(
                f"prerequisite expansion exceeded depth {max_depth} at '{node}'"
            )
        seen.add(node)
        order.append(node)
        if node in p.known:
            continue  # explicitly provided: recorded, never expanded
        if enumeration_depth is not None and depth >= enumeration_depth:
            continue
        for child in g.children(node):
            if child not in seen:
                queue.append((child, depth + 1))
    return order


def enumerate_prerequisites(
    g: DependencyGraph,
    p: Problem,
    threshold: Fraction | float = DEFAULT_THRESHOLD,
    weights: ConfidenceWeights = EQUAL_WEIGHTS,
    *,
    max_depth: int = DEFAULT_MAX_DEPTH,
    enumeration_depth: Optional[int] = None,
    derivation: bool = True,
) -> list[Prerequisite]:
    """Enumerate prerequisites in breadth-first order and verify each.

    Availability is verified deepest-first so that a gap is attributed to
    the deepest unexplained variable; ancestors whose unavailability is
    explained by already-flagged gaps come back as AlreadyMissing.  The
    returned list is in enumeration (breadth-first) order.
    """
    theta = as_fraction(threshold)
    order = _enumeration_order(g, p, max_depth, enumeration_depth)
    flagged: list[VariableId] = []
    results: dict[VariableId, Prerequisite] = {}
    for subject in reversed(order):
        if derivation:
            status, path = check_availability(subject, p, flagged)
        else:
            # ablation: availability by literal membership only
            if subject in p.known:
                status, path = AvailabilityStatus.EXPLICITLY_PROVIDED, None
            elif subject in flagged:
                status, path = AvailabilityStatus.ALREADY_MISSING, None
            else:
                status, path = AvailabilityStatus.POTENTIALLY_MISSING, None
        conf = confidence_score(subject, status, p, weights)
        if conf < theta and subject != g.root:
            flagged.append(subject)
        results[subject] = Prerequisite(subject, status, conf, path)
    return [results[s] for s in order]


def _missing_item(subject: VariableId, g: DependencyGraph) -> MissingItem:
    via = g.incoming_relation(subject)
    if via is None:
        desc = f"value of variable '{subject}' is neither given nor derivable"
    else:
        desc = (
            f"value of variable '{subject}' needed by relation '{via}' "
            "is neither given nor derivable"
        )
    return MissingItem(Taxonomy.NUMERICAL_VALUE, subject, desc)


def detect_missing(
    p: Problem,
    threshold: Fraction | float = DEFAULT_THRESHOLD,
    weights: ConfidenceWeights = EQUAL_WEIGHTS,
    *,
    max_depth: int = DEFAULT_MAX_DEPTH,
    enumeration_depth: Optional[int] = None,
    derivation: bool = True,
) -> DetectionResult:
    """Full backward detection: build graph, enumerate prerequisites,
    verify availability, gate on confidence, assemble the missing set.
    The goal variable itself is never reported missing."""
    theta = as_fraction(threshold)
    g = build_dependency_graph(p)
    prereqs = enumerate_prerequisites(
        g,
        p,
        theta,
        weights,
        max_depth=max_depth,
        enumeration_depth=enumeration_depth,
        derivation=derivation,
    )
    missing_subjects = sorted(
        q.subject for q in prereqs if q.confidence < theta and q.subject != g.root
    )
    missing = tuple(_missing_item(s, g) for s in missing_subjects)
    return DetectionResult(
        i_missing="yes" if missing else "no",
        missing=missing,
        prerequisites=tuple(prereqs),
        oracle_calls=len(prereqs),
    )


def forward_baseline_detect(p: Problem) -> DetectionResult:
    """Forward-chaining baseline: saturate the knowns and see whether the
    goal gets valued. Can tell *that* something is missing but never
    *what* — on a 'yes' verdict it emits a single generic item."""
    goal = extract_goal(p)
    closure = forward_closure(p)
    if goal in closure.values:
        return DetectionResult("no", (), (), oracle_calls=1)
    item = MissingItem(Taxonomy.NUMERICAL_VALUE, goal, GENERIC_GAP_DESCRIPTION)
    return DetectionResult("yes", (item,), (), oracle_calls=1)


def coverage_detect(p: Problem) -> DetectionResult:
    """Ablation detector: verdict from enumeration coverage alone — any
    enumerated prerequisite not explicitly known counts as a gap, with no
    availability analysis."""
    g = build_dependency_graph(p)
    order = _enumeration_order(g, p, DEFAULT_MAX_DEPTH)
    uncovered = sorted(s for s in order if s not in p.known and s != g.root)
    missing = tuple(_missing_item(s, g) for s in uncovered)
    return DetectionResult(
        i_missing="yes" if missing else "no",
        missing=missing,
        prerequisites=(),
        oracle_calls=len(order),
    )


def is_generic_gap(item: MissingItem) -> bool:
    return item.description == GENERIC_GAP_DESCRIPTION


# ---------------------------------------------------------------------------
# exhaustive oracle

ORACLE_VARIABLE_CAP = 20


def brute_force_oracle(
    p: Problem,
) -> tuple[bool, frozenset[frozenset[VariableId]]]:
    """Exhaustive ground truth: enumerate subsets of unvalued variables in
    increasing size; a subset qualifies when treating its members as given
    makes the goal forward-derivable. Returns all minimal qualifying sets.
    The goal itself is excluded from candidates, otherwise every problem
    would be trivially fixable.
    """
    goal = extract_goal(p)
    base = forward_closure(p)
    if goal in base.values:
        return False, frozenset()
    candidates = sorted(v for v in p.variables if v not in base.values and v != goal)
    if len(candidates) > ORACLE_VARIABLE_CAP:
        raise TooLarge(
            f"{len(candidates)} unvalued variables exceeds the oracle cap of "
            f"{ORACLE_VARIABLE_CAP}"
        )
    minimal: list[frozenset[VariableId]] = []
    for size in range(1, len(candidates) + 1):
        for combo in itertools.combinations(candidates, size):
            s = frozenset(combo)
            if any(m <= s for m in minimal):
                continue  # superset of a known minimal set
            closure = forward_closure(p, extra=s)
            if goal in closure.values:
                minimal.append(s)
    return True, frozenset(minimal)
