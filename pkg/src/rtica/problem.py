"""Core problem representation: variables, relations, knowns, goal.

A problem is the tuple (variables, relations, known conditions, goal).
Values are exact rationals throughout so derivability checks never
depend on floating-point tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Optional

from .errors import NoGoal, SemanticError

VariableId = str
RelationId = str


class RelationKind(str, Enum):
    LINEAR_EQ = "linear_eq"  # sum(coef_i * var_i) = const
    ASSIGN = "assign"        # var = literal
    DIFF = "diff"            # x = y + c
    PRODUCT = "product"      # x = y * z
    GENERIC_FN = "generic_fn"  # x = f(y1..yn), f opaque


class Taxonomy(str, Enum):
    NUMERICAL_VALUE = "numerical_value"
    VARIABLE_DEFINITION = "variable_definition"
    RELATIONAL_CONSTRAINT = "relational_constraint"
    IMPLICIT_ASSUMPTION = "implicit_assumption"


_ARITY = {
    RelationKind.ASSIGN: (1, 1),
    RelationKind.DIFF: (2, 2),
    RelationKind.PRODUCT: (3, 3),
    RelationKind.LINEAR_EQ: (1, None),
    RelationKind.GENERIC_FN: (1, None),
}

_PARAM_COUNT = {
    RelationKind.ASSIGN: lambda n: 1,
    RelationKind.DIFF: lambda n: 1,
    RelationKind.PRODUCT: lambda n: 0,
    RelationKind.LINEAR_EQ: lambda n: n + 1,  # one coef per operand + const
    RelationKind.GENERIC_FN: lambda n: 0,
}


@dataclass(frozen=True)
class Relation:
    """One constraint over problem variables.

    Every kind except ``generic_fn`` is determinate: it can compute any
    one operand from values for the other operands.  A ``generic_fn``
    has an opaque function, so only its output (``operands[0]``) can be
    determined, and only in the forward direction.
    """

    id: RelationId
    kind: RelationKind
    operands: tuple[VariableId, ...]
    params: tuple[Fraction, ...] = ()
    fn_name: Optional[str] = None

    def __post_init__(self):
        lo, hi = _ARITY[self.kind]
        n = len(self.operands)
        if n < lo or (hi is not None and n > hi):
            raise SemanticError(
                SemanticError.ARITY_MISMATCH,
                f"relation '{self.id}' of kind {self.kind.value} has {n} operands",
            )
        expected = _PARAM_COUNT[self.kind](n)
        if len(self.params) != expected:
            raise SemanticError(
                SemanticError.ARITY_MISMATCH,
                f"relation '{self.id}' expects {expected} parameters, got {len(self.params)}",
            )
        if len(set(self.operands)) != n:
            raise SemanticError(
                SemanticError.ARITY_MISMATCH,
                f"relation '{self.id}' repeats an operand",
            )
        if self.kind is RelationKind.LINEAR_EQ and any(c == 0 for c in self.params[:-1]):
            raise SemanticError(
                SemanticError.ZERO_COEFFICIENT,
                f"relation '{self.id}' has a zero coefficient",
            )
        if self.kind is RelationKind.GENERIC_FN and not self.fn_name:
            raise SemanticError(
                SemanticError.ARITY_MISMATCH,
                f"relation '{self.id}' is generic_fn without a function name",
            )

    def can_determine(self, var: VariableId) -> bool:
        if var not in self.operands:
            return False
        if self.kind is RelationKind.GENERIC_FN:
            return var == self.operands[0]
        return True

    def inputs_for(self, var: VariableId) -> tuple[VariableId, ...]:
        """Operands that must be valued before ``var`` can be determined."""
        return tuple(o for o in self.operands if o != var)

    def solve(self, var: VariableId, values: Mapping[VariableId, Optional[Fraction]]):
        """Compute ``var`` from the other operands.

        Returns (True, value) when the relation fires; value is None when
        the inputs are structurally determined but numerically unknown
        (e.g. downstream of a generic function).  Returns (False, None)
        when the arithmetic is undefined (division by zero).
        """
        if self.kind is RelationKind.ASSIGN:
            return True, self.params[0]
        ins = {o: values[o] for o in self.inputs_for(var)}
        if any(v is None for v in ins.values()):
            return True, None
        if self.kind is RelationKind.GENERIC_FN:
            return True, None  # opaque function: output value unknowable
        if self.kind is RelationKind.DIFF:
            x, y = self.operands
            (c,) = self.params
            return True, (ins[y] + c) if var == x else (ins[x] - c)
        if self.kind is RelationKind.PRODUCT:
            x, y, z = self.operands
            if var == x:
                return True, ins[y] * ins[z]
            other = z if var == y else y
            if ins[other] == 0:
                return False, None
            return True, ins[x] / ins[other]
        # linear_eq: coef*var = const - sum(coef_j * var_j)
        coefs = dict(zip(self.operands, self.params[:-1]))
        const = self.params[-1]
        acc = const - sum(coefs[o] * ins[o] for o in self.inputs_for(var))
        return True, acc / coefs[var]


@dataclass(frozen=True)
class MissingItem:
    """One atomic piece of missing information."""

    kind: Taxonomy
    subject: str  # VariableId, RelationId, or declared phantom id
    description: str = ""


@dataclass(frozen=True)
class GroundTruth:
    """Evaluation label: is the problem incomplete, and what was removed."""

    is_incomplete: bool
    missing_items: frozenset[MissingItem] = frozenset()
    source_taxonomy: frozenset[Taxonomy] = frozenset()

    def __post_init__(self):
        if self.is_incomplete != bool(self.missing_items):
            raise SemanticError(
                SemanticError.BAD_LABEL,
                "is_incomplete must hold exactly when missing_items is nonempty",
            )


@dataclass(frozen=True)
class Problem:
    """Immutable problem instance; safe to share across threads."""

    id: str
    variables: frozenset[VariableId]
    relations: tuple[Relation, ...]
    known: Mapping[VariableId, Fraction]
    goal: Optional[VariableId]
    raw_text: Optional[str] = None
    label: Optional[GroundTruth] = None
    phantoms: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.goal is not None and self.goal not in self.variables:
            raise SemanticError(
                SemanticError.GOAL_UNDECLARED, f"goal '{self.goal}' is not a declared variable"
            )
        for v in self.known:
            if v not in self.variables:
                raise SemanticError(
                    SemanticError.UNDECLARED_VARIABLE, f"known value for undeclared variable '{v}'"
                )
        seen: set[RelationId] = set()
        for rel in self.relations:
            if rel.id in seen:
                raise SemanticError(
                    SemanticError.DUPLICATE_RELATION, f"relation id '{rel.id}' declared twice"
                )
            seen.add(rel.id)
            for o in rel.operands:
                if o not in self.variables:
                    raise SemanticError(
                        SemanticError.UNDECLARED_VARIABLE,
                        f"relation '{rel.id}' references undeclared variable '{o}'",
                    )
        if self.label is not None:
            ids = self.variables | seen | self.phantoms
            for item in self.label.missing_items:
                if item.subject not in ids:
                    raise SemanticError(
                        SemanticError.UNKNOWN_SUBJECT,
                        f"label references unknown subject '{item.subject}'",
                    )

    def relation(self, rid: RelationId) -> Relation:
        for rel in self.relations:
            if rel.id == rid:
                return rel
        raise KeyError(rid)

    def with_label(self, label: Optional[GroundTruth]) -> "Problem":
        return Problem(
            id=self.id,
            variables=self.variables,
            relations=self.relations,
            known=self.known,
            goal=self.goal,
            raw_text=self.raw_text,
            label=label,
            phantoms=self.phantoms,
        )


def extract_goal(p: Problem) -> VariableId:
    """The target variable the problem asks for."""
    if p.goal is None:
        raise NoGoal(f"problem '{p.id}' declares no goal")
    return p.goal


def extract_known(p: Problem) -> set[tuple[VariableId, Fraction]]:
    """The explicitly stated variable-value assignments."""
    return set(p.known.items())


def make_problem(
    pid: str,
    variables: Iterable[VariableId],
    relations: Iterable[Relation] = (),
    known: Mapping[VariableId, int | str | Fraction] | None = None,
    goal: Optional[VariableId] = None,
    raw_text: Optional[str] = None,
    label: Optional[GroundTruth] = None,
    phantoms: Iterable[str] = (),
) -> Problem:
    """Convenience constructor that coerces known values to Fraction."""
    vars_ = list(variables)
    if len(set(vars_)) != len(vars_):
        raise SemanticError(SemanticError.DUPLICATE_VARIABLE, "variable declared twice")
    return Problem(
        id=pid,
        variables=frozenset(vars_),
        relations=tuple(relations),
        known={k: Fraction(v) for k, v in (known or {}).items()},
        goal=goal,
        raw_text=raw_text,
        label=label,
        phantoms=frozenset(phantoms),
    )
