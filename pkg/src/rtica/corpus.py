"""JSONL corpus files: one record per problem.

Record fields: ``id``, ``dsl`` (symbolic encoding, label excluded),
``raw_text`` (natural-language rendering, optional), ``label``
(ground truth, optional).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Optional

from .dsl import parse_problem, serialize_problem
from .problem import GroundTruth, MissingItem, Problem, Taxonomy


def label_to_json(label: GroundTruth) -> dict:
    return {
        "is_incomplete": label.is_incomplete,
        "missing_items": [
            {"kind": i.kind.value, "subject": i.subject, "description": i.description}
            for i in sorted(label.missing_items, key=lambda i: (i.kind.value, i.subject))
        ],
        "source_taxonomy": sorted(t.value for t in label.source_taxonomy),
    }


def label_from_json(data: dict) -> GroundTruth:
    items = frozenset(
        MissingItem(Taxonomy(i["kind"]), i["subject"], i.get("description", ""))
        for i in data.get("missing_items", [])
    )
    return GroundTruth(
        is_incomplete=bool(data["is_incomplete"]),
        missing_items=items,
        source_taxonomy=frozenset(Taxonomy(t) for t in data.get("source_taxonomy", ())),
    )


def problem_to_record(p: Problem) -> dict:
    record: dict = {"id": p.id, "dsl": serialize_problem(p.with_label(None))}
    if p.raw_text is not None:
        record["raw_text"] = p.raw_text
    if p.label is not None:
        record["label"] = label_to_json(p.label)
    return record


def record_to_problem(record: dict) -> Problem:
    p = parse_problem(record["dsl"], problem_id=record["id"])
    label = label_from_json(record["label"]) if record.get("label") else None
    if label is not None:
        p = p.with_label(label)
    return p


def dump_jsonl(problems: Iterable[Problem]) -> str:
    lines = [json.dumps(problem_to_record(p), sort_keys=True) for p in problems]
    return "\n".join(lines) + ("\n" if lines else "")


def load_jsonl(path: str | Path) -> list[Problem]:
    problems = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            problems.append(record_to_problem(json.loads(line)))
    return problems
