"""Plain-text DSL for problem instances (``.rtp`` files).

Line-oriented statements, one per line, ``#`` starts a comment:

    text John bought some apples. ...
    var X
    rel r1: 1*X - 1*given_away - 1*current_left = 0
    known given_away = 3
    goal X
    phantom old_leaf
    label missing numerical_value current_left "value not stated"
    label complete

Relation syntax, tried in order:

    X = f(Y, Z)      generic function (opaque, forward-only)
    X = Y * Z        product
    X = Y + 3        difference with a constant (also ``-``)
    X = 5            literal assignment
    2*X - 1*Y = 10   general linear equation (variables may appear on
                     both sides; normalized to left-hand side)

Serialization is canonical: statements emitted in a fixed block order
with ids sorted, so serializing twice is byte-stable.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Optional

from .errors import DslSyntaxError, SemanticError
from .problem import (
    GroundTruth,
    MissingItem,
    Problem,
    Relation,
    RelationKind,
    Taxonomy,
)

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_NUM = r"-?\d+(?:/\d+|\.\d+)?"

_RE_GENERIC = re.compile(rf"^({_IDENT})\s*=\s*({_IDENT})\s*\(\s*({_IDENT}(?:\s*,\s*{_IDENT})*)\s*\)$")
_RE_PRODUCT = re.compile(rf"^({_IDENT})\s*=\s*({_IDENT})\s*\*\s*({_IDENT})$")
_RE_DIFF = re.compile(rf"^({_IDENT})\s*=\s*({_IDENT})\s*([+-])\s*(\d+(?:/\d+|\.\d+)?)$")
_RE_ASSIGN = re.compile(rf"^({_IDENT})\s*=\s*({_NUM})$")
_RE_TERM = re.compile(rf"^(?:({_NUM})\s*\*\s*)?({_IDENT})$|^({_NUM})$")


def _rat(text: str) -> Fraction:
    return Fraction(text)


def _strip_comment(line: str) -> str:
    in_quote = False
    for i, ch in enumerate(line):
        if ch == '"':
            in_quote = not in_quote
        elif ch == "#" and not in_quote:
            return line[:i]
    return line


def _parse_side(side: str, lineno: int) -> list[tuple[Fraction, Optional[str]]]:
    """Parse one side of a linear equation into (coef, var|None) terms."""
    s = side.strip()
    if not s:
        raise DslSyntaxError("empty equation side", lineno, "at least one term")
    if s[0] not in "+-":
        s = "+" + s
    if not re.fullmatch(r"(?:[+-]\s*[^+\-]+)+", s):
        raise DslSyntaxError(f"cannot parse '{side.strip()}'", lineno, "a sum of terms")
    terms: list[tuple[Fraction, Optional[str]]] = []
    for sign_txt, chunk in re.findall(r"([+-])\s*([^+\-]+)", s):
        sign = Fraction(-1) if sign_txt == "-" else Fraction(1)
        m = _RE_TERM.match(chunk.strip())
        if not m:
            raise DslSyntaxError(f"bad term '{chunk.strip()}'", lineno, "coef*var, var, or number")
        coef_txt, var, const = m.groups()
        if const is not None:
            terms.append((sign * _rat(const), None))
        else:
            coef = _rat(coef_txt) if coef_txt else Fraction(1)
            terms.append((sign * coef, var))
    return terms


def _parse_relation(rid: str, expr: str, lineno: int) -> Relation:
    expr = expr.strip()
    m = _RE_GENERIC.match(expr)
    if m:
        out, fn, args = m.group(1), m.group(2), m.group(3)
        operands = (out, *[a.strip() for a in args.split(",")])
        return Relation(rid, RelationKind.GENERIC_FN, operands, (), fn_name=fn)
    m = _RE_PRODUCT.match(expr)
    if m:
        return Relation(rid, RelationKind.PRODUCT, (m.group(1), m.group(2), m.group(3)))
    m = _RE_DIFF.match(expr)
    if m:
        c = _rat(m.group(4))
        if m.group(3) == "-":
            c = -c
        return Relation(rid, RelationKind.DIFF, (m.group(1), m.group(2)), (c,))
    m = _RE_ASSIGN.match(expr)
    if m:
        return Relation(rid, RelationKind.ASSIGN, (m.group(1),), (_rat(m.group(2)),))
    if "=" not in expr:
        raise DslSyntaxError(f"relation '{rid}' has no '='", lineno, "an equation")
    lhs_txt, rhs_txt = expr.split("=", 1)
    lhs = _parse_side(lhs_txt, lineno)
    rhs = _parse_side(rhs_txt, lineno)
    coefs: dict[str, Fraction] = {}
    order: list[str] = []
    const = Fraction(0)
    for sign, terms in ((Fraction(1), lhs), (Fraction(-1), rhs)):
        for coef, var in terms:
            if var is None:
                const -= sign * coef
            else:
                if var not in coefs:
                    coefs[var] = Fraction(0)
                    order.append(var)
                coefs[var] += sign * coef
    order = [v for v in order if coefs[v] != 0]
    if not order:
        raise SemanticError(
            SemanticError.ZERO_COEFFICIENT, f"relation '{rid}' mentions no variable"
        )
    params = tuple(coefs[v] for v in order) + (const,)
    return Relation(rid, RelationKind.LINEAR_EQ, tuple(order), params)


def parse_problem(text: str, problem_id: str = "problem") -> Problem:
    """Parse DSL source into a validated Problem. Deterministic."""
    variables: list[str] = []
    relations: list[Relation] = []
    known: dict[str, Fraction] = {}
    goal: Optional[str] = None
    text_lines: list[str] = []
    phantoms: list[str] = []
    missing: list[MissingItem] = []
    labelled_complete = False
    has_label = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw if raw.lstrip().startswith("text ") else _strip_comment(raw)
        line = line.strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "var":
            if not re.fullmatch(_IDENT, rest):
                raise DslSyntaxError(f"bad variable name '{rest}'", lineno, "an identifier")
            if rest in variables:
                raise SemanticError(
                    SemanticError.DUPLICATE_VARIABLE, f"variable '{rest}' declared twice"
                )
            variables.append(rest)
        elif head == "rel":
            rid, sep, expr = rest.partition(":")
            rid = rid.strip()
            if not sep or not re.fullmatch(_IDENT, rid):
                raise DslSyntaxError("bad relation statement", lineno, "'rel <id>: <equation>'")
            relations.append(_parse_relation(rid, expr, lineno))
        elif head == "known":
            m = re.fullmatch(rf"({_IDENT})\s*=\s*({_NUM})", rest)
            if not m:
                raise DslSyntaxError("bad known statement", lineno, "'known <var> = <value>'")
            var = m.group(1)
            if var in known:
                raise SemanticError(
                    SemanticError.DUPLICATE_KNOWN, f"known value for '{var}' stated twice"
                )
            known[var] = _rat(m.group(2))
        elif head == "goal":
            if goal is not None:
                raise DslSyntaxError("goal declared twice", lineno)
            if not re.fullmatch(_IDENT, rest):
                raise DslSyntaxError(f"bad goal '{rest}'", lineno, "an identifier")
            goal = rest
        elif head == "text":
            text_lines.append(rest)
        elif head == "phantom":
            if not re.fullmatch(_IDENT, rest):
                raise DslSyntaxError(f"bad phantom id '{rest}'", lineno, "an identifier")
            phantoms.append(rest)
        elif head == "label":
            has_label = True
            if rest == "complete":
                labelled_complete = True
            else:
                m = re.fullmatch(
                    rf"missing\s+({_IDENT})\s+({_IDENT})(?:\s+\"([^\"]*)\")?", rest
                )
                if not m:
                    raise DslSyntaxError(
                        "bad label statement", lineno,
                        "'label complete' or 'label missing <kind> <subject> \"desc\"'",
                    )
                try:
                    kind = Taxonomy(m.group(1))
                except ValueError:
                    raise SemanticError(
                        SemanticError.BAD_LABEL, f"unknown taxonomy kind '{m.group(1)}'"
                    ) from None
                missing.append(MissingItem(kind, m.group(2), m.group(3) or ""))
        else:
            raise DslSyntaxError(
                f"unknown statement '{head}'", lineno,
                "var, rel, known, goal, text, phantom, or label",
            )

    if goal is None:
        raise SemanticError(SemanticError.MISSING_GOAL, "no goal clause")
    if labelled_complete and missing:
        raise SemanticError(
            SemanticError.BAD_LABEL, "'label complete' conflicts with missing items"
        )
    label = None
    if has_label:
        label = GroundTruth(
            is_incomplete=bool(missing),
            missing_items=frozenset(missing),
            source_taxonomy=frozenset(i.kind for i in missing),
        )
    return Problem(
        id=problem_id,
        variables=frozenset(variables),
        relations=tuple(relations),
        known=known,
        goal=goal,
        raw_text="\n".join(text_lines) if text_lines else None,
        label=label,
        phantoms=frozenset(phantoms),
    )


def _fmt_rat(x: Fraction) -> str:
    return str(x)


def _fmt_linear(rel: Relation) -> str:
    parts: list[str] = []
    for i, (coef, var) in enumerate(zip(rel.params[:-1], rel.operands)):
        if i == 0:
            parts.append(f"{_fmt_rat(coef)}*{var}")
        elif coef < 0:
            parts.append(f"- {_fmt_rat(-coef)}*{var}")
        else:
            parts.append(f"+ {_fmt_rat(coef)}*{var}")
    return f"{' '.join(parts)} = {_fmt_rat(rel.params[-1])}"


def _fmt_relation(rel: Relation) -> str:
    if rel.kind is RelationKind.GENERIC_FN:
        return f"{rel.operands[0]} = {rel.fn_name}({', '.join(rel.operands[1:])})"
    if rel.kind is RelationKind.PRODUCT:
        x, y, z = rel.operands
        return f"{x} = {y} * {z}"
    if rel.kind is RelationKind.DIFF:
        x, y = rel.operands
        (c,) = rel.params
        op, mag = ("-", -c) if c < 0 else ("+", c)
        return f"{x} = {y} {op} {_fmt_rat(mag)}"
    if rel.kind is RelationKind.ASSIGN:
        return f"{rel.operands[0]} = {_fmt_rat(rel.params[0])}"
    return _fmt_linear(rel)


def serialize_problem(p: Problem) -> str:
    """Canonical DSL rendering; ``parse(serialize(p))`` equals ``p``."""
    lines: list[str] = []
    if p.raw_text:
        lines.extend(f"text {t}" for t in p.raw_text.splitlines())
    lines.extend(f"var {v}" for v in sorted(p.variables))
    lines.extend(
        f"rel {rel.id}: {_fmt_relation(rel)}"
        for rel in sorted(p.relations, key=lambda r: r.id)
    )
    lines.extend(f"known {v} = {_fmt_rat(p.known[v])}" for v in sorted(p.known))
    if p.goal is not None:
        lines.append(f"goal {p.goal}")
    lines.extend(f"phantom {ph}" for ph in sorted(p.phantoms))
    if p.label is not None:
        if not p.label.is_incomplete:
            lines.append("label complete")
        else:
            for item in sorted(p.label.missing_items, key=lambda i: (i.kind.value, i.subject)):
                lines.append(
                    f'label missing {item.kind.value} {item.subject} "{item.description}"'
                )
    return "\n".join(lines) + "\n"
