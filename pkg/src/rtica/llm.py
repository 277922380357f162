"""Three-phase prompt pipeline against an OpenAI-compatible chat endpoint.

Phase 1 frames the problem, phase 2 enumerates the conditions a solution
needs, phase 3 tags each condition AVAILABLE / DERIVABLE / MISSING.
Marker parsing is deliberately forgiving about bullets and casing since
model families format the tags differently.
"""

from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import httpx

from .engine import AvailabilityStatus, DetectionResult, Prerequisite
from .errors import (
    BadConfig,
    MalformedResponse,
    RateLimited,
    TransportError,
    UnboundPlaceholder,
)
from .problem import MissingItem, Taxonomy

API_KEY_ENV = "RTICA_API_KEY"

_PLACEHOLDER = re.compile(r"\{([A-Z][A-Z0-9_]*)\}")

PHASES = ("understanding", "enumeration", "verification")


@dataclass(frozen=True)
class PromptTemplate:
    phase: str
    body: str

    @property
    def placeholders(self) -> frozenset[str]:
        return frozenset(_PLACEHOLDER.findall(self.body))


def load_template(phase: str, template_dir: Optional[str | Path] = None) -> PromptTemplate:
    """Load a phase template from ``template_dir`` or the packaged defaults."""
    if phase not in PHASES:
        raise BadConfig(f"unknown phase '{phase}'")
    if template_dir is not None:
        body = (Path(template_dir) / f"{phase}.txt").read_text(encoding="utf-8")
    else:
        body = (resources.files("rtica") / "templates" / f"{phase}.txt").read_text(
            encoding="utf-8"
        )
    return PromptTemplate(phase=phase, body=body)


def render_prompt(t: PromptTemplate, bindings: dict[str, str]) -> str:
    """Byte-deterministic placeholder substitution."""
    out = t.body
    for name in sorted(t.placeholders):
        if name not in bindings:
            raise UnboundPlaceholder(f"placeholder {{{name}}} not bound for phase {t.phase}")
        out = out.replace("{" + name + "}", bindings[name])
    leftover = _PLACEHOLDER.search(out)
    if leftover:
        raise UnboundPlaceholder(f"residual placeholder {leftover.group(0)} after rendering")
    return out


class CostMeter:
    """Thread-safe accumulator for token usage and wall-clock time."""

    def __init__(self):
        self._lock = threading.Lock()
        self.calls = 0
        self.prompt_tokens = 0
        self.completion_tokens = 0
        self.elapsed_s = 0.0

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def add(self, prompt_tokens: int, completion_tokens: int, elapsed_s: float):
        with self._lock:
            self.calls += 1
            self.prompt_tokens += prompt_tokens
            self.completion_tokens += completion_tokens
            self.elapsed_s += elapsed_s

    def summary(self) -> dict:
        return {
            "calls": self.calls,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "total_tokens": self.total_tokens,
            "avg_tokens": (self.total_tokens / self.calls) if self.calls else 0.0,
            "processing_time_s": self.elapsed_s,
        }


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str
    model: str
    temperature: float = 0.7
    top_p: float = 0.9
    seeds: tuple[int, ...] = (0, 1, 2)
    max_retries: int = 3
    timeout: float = 30.0
    backoff_base: float = 0.25
    concurrency: int = 1
    template_dir: Optional[str] = None

    def __post_init__(self):
        if self.temperature < 0:
            raise BadConfig("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise BadConfig("top_p must be in (0, 1]")
        if not self.seeds:
            raise BadConfig("at least one seed required")

    @classmethod
    def from_file(cls, path: str | Path) -> "LlmConfig":
        """Read a `key = value` config file (see README for keys)."""
        values: dict[str, str] = {}
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise BadConfig(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        try:
            return cls(
                endpoint=values["endpoint"],
                model=values["model"],
                temperature=float(values.get("temperature", 0.7)),
                top_p=float(values.get("top_p", 0.9)),
                seeds=tuple(int(s) for s in values.get("seeds", "0,1,2").split(",")),
                max_retries=int(values.get("max_retries", 3)),
                timeout=float(values.get("timeout", 30.0)),
                backoff_base=float(values.get("backoff_base", 0.25)),
                concurrency=int(values.get("concurrency", 1)),
                template_dir=values.get("template_dir"),
            )
        except KeyError as exc:
            raise BadConfig(f"{path}: missing required key {exc}") from None


def _classify_response(resp: httpx.Response) -> None:
    if resp.status_code == 429:
        raise RateLimited(f"rate limited: {resp.text[:200]}")
    if resp.status_code >= 500:
        raise TransportError(f"server error {resp.status_code}")
    if resp.status_code != 200:
        err = TransportError(f"unexpected status {resp.status_code}")
        err.retriable = False
        raise err


def call_model(
    cfg: LlmConfig,
    prompt: str | Sequence[dict],
    *,
    seed: Optional[int] = None,
    client: Optional[httpx.Client] = None,
    meter: Optional[CostMeter] = None,
) -> tuple[str, dict]:
    """One chat completion with retry/backoff. Returns (text, usage)."""
    messages = [{"role": "user", "content": prompt}] if isinstance(prompt, str) else list(prompt)
    body = {
        "model": cfg.model,
        "messages": messages,
        "temperature": cfg.temperature,
        "top_p": cfg.top_p,
    }
    if seed is not None:
        body["seed"] = seed
    headers = {}
    api_key = os.environ.get(API_KEY_ENV)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    url = cfg.endpoint.rstrip("/") + "/chat/completions"
    owned = client is None
    client = client or httpx.Client(timeout=cfg.timeout)
    started = time.monotonic()
    try:
        attempt = 0
        while True:
            try:
                resp = client.post(url, json=body, headers=headers)
                _classify_response(resp)
                break
            except (RateLimited, TransportError, httpx.TransportError) as exc:
                retriable = getattr(exc, "retriable", True)
                if not retriable or attempt >= cfg.max_retries:
                    if isinstance(exc, httpx.TransportError):
                        raise TransportError(str(exc)) from exc
                    raise
                time.sleep(cfg.backoff_base * (2**attempt))
                attempt += 1
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"not a chat completion: {exc}") from exc
        usage = data.get("usage") or {}
        if meter is not None:
            meter.add(
                int(usage.get("prompt_tokens", 0)),
                int(usage.get("completion_tokens", 0)),
                time.monotonic() - started,
            )
        return text, usage
    finally:
        if owned:
            client.close()


# ---------------------------------------------------------------------------
# marker parsing

_MARKER_LINE = re.compile(
    r"^\s*(?:[-*•]\s*|\d+[.)]\s*)?(available|derivable|missing)\s*[:–-]\s*(.*)$",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class VerdictEntry:
    condition: str
    marker: str  # AVAILABLE | DERIVABLE | MISSING
    detail: str


@dataclass(frozen=True)
class ParsedVerdict:
    entries: tuple[VerdictEntry, ...]
    remainder: tuple[str, ...]


def parse_verdicts(response: str) -> ParsedVerdict:
    """Total, line-oriented scan for the three marker prefixes.

    Lines matching no marker accumulate in the remainder; never raises on
    arbitrary text.
    """
    entries: list[VerdictEntry] = []
    remainder: list[str] = []
    for line in response.splitlines():
        m = _MARKER_LINE.match(line)
        if not m:
            if line.strip():
                remainder.append(line)
            continue
        marker = m.group(1).upper()
        rest = m.group(2).strip()
        condition, sep, detail = rest.partition(" - ")
        entries.append(
            VerdictEntry(
                condition=condition.strip().strip("[]"),
                marker=marker,
                detail=detail.strip().strip("[]") if sep else "",
            )
        )
    return ParsedVerdict(entries=tuple(entries), remainder=tuple(remainder))


# ---------------------------------------------------------------------------
# end-to-end detection

@dataclass(frozen=True)
class PhaseToggles:
    understanding: bool = True
    enumeration: bool = True
    verification: bool = True
    # drop one of the phase-1 numbered sub-instructions
    target_recognition: bool = True
    problem_restructuring: bool = True


_CONDITION_LINE = re.compile(r"^\s*(?:\d+[.)]\s*|[-*•]\s*)(.+)$")

_MARKER_STATUS = {
    "AVAILABLE": (AvailabilityStatus.EXPLICITLY_PROVIDED, 1, None),
    "DERIVABLE": (AvailabilityStatus.DERIVABLE, 1, ()),
    "MISSING": (AvailabilityStatus.POTENTIALLY_MISSING, 0, None),
}


def _extract_conditions(response: str) -> list[str]:
    out = [m.group(1).strip() for m in map(_CONDITION_LINE.match, response.splitlines()) if m]
    return out or [line.strip() for line in response.splitlines() if line.strip()]


def _strip_phase1_instruction(template: PromptTemplate, toggles: PhaseToggles) -> PromptTemplate:
    body = template.body
    if not toggles.target_recognition:
        body = "\n".join(l for l in body.splitlines() if not l.startswith("1."))
    if not toggles.problem_restructuring:
        body = "\n".join(l for l in body.splitlines() if not l.startswith("2."))
    return replace(template, body=body)


def _norm(condition: str) -> str:
    return " ".join(condition.lower().split())


def _detect_one_seed(
    raw_text: str,
    cfg: LlmConfig,
    toggles: PhaseToggles,
    seed: int,
    client: Optional[httpx.Client],
    meter: Optional[CostMeter],
    audit: Optional[list],
) -> tuple[list[Prerequisite], list[MissingItem], int]:
    messages: list[dict] = []
    calls = 0

    def ask(prompt: str) -> str:
        nonlocal calls
        messages.append({"role": "user", "content": prompt})
        text, _ = call_model(cfg, messages, seed=seed, client=client, meter=meter)
        messages.append({"role": "assistant", "content": text})
        calls += 1
        return text

    if toggles.understanding:
        t1 = _strip_phase1_instruction(load_template("understanding", cfg.template_dir), toggles)
        ask(render_prompt(t1, {"PROBLEM_TEXT": raw_text}))

    if toggles.enumeration:
        t2 = load_template("enumeration", cfg.template_dir)
        conditions = _extract_conditions(ask(render_prompt(t2, {"PROBLEM_TEXT": raw_text})))
    else:
        conditions = []

    prereqs: list[Prerequisite] = []
    missing: list[MissingItem] = []
    if toggles.verification:
        t3 = load_template("verification", cfg.template_dir)
        cond_block = (
            "\n".join(f"{i}. {c}" for i, c in enumerate(conditions, 1))
            if conditions
            else "(identify the necessary conditions directly from the problem)"
        )
        verdicts = parse_verdicts(
            ask(render_prompt(t3, {"PROBLEM_TEXT": raw_text, "CONDITIONS": cond_block}))
        )
        for entry in verdicts.entries:
            status, conf, path = _MARKER_STATUS[entry.marker]
            prereqs.append(Prerequisite(_norm(entry.condition), status, conf, path))
            if entry.marker == "MISSING":
                missing.append(
                    MissingItem(Taxonomy.NUMERICAL_VALUE, _norm(entry.condition), entry.detail)
                )
    else:
        # ablation: every enumerated condition is treated as unverifiable
        for c in conditions:
            prereqs.append(
                Prerequisite(_norm(c), AvailabilityStatus.POTENTIALLY_MISSING, 0, None)
            )
            missing.append(MissingItem(Taxonomy.NUMERICAL_VALUE, _norm(c), "unverified condition"))

    if audit is not None:
        audit.append({"seed": seed, "messages": list(messages)})
    return prereqs, missing, calls


def llm_detect(
    raw_text: str,
    cfg: LlmConfig,
    ablation: PhaseToggles = PhaseToggles(),
    *,
    client: Optional[httpx.Client] = None,
    meter: Optional[CostMeter] = None,
    audit: Optional[list] = None,
) -> DetectionResult:
    """Run the three-phase pipeline once per configured seed and majority-
    vote the verdict; the missing set is the union of majority-supported
    items (falling back to items from yes-voting seeds so a yes verdict
    never comes with an empty set)."""
    per_seed: list[tuple[list[Prerequisite], list[MissingItem]]] = []
    total_calls = 0
    for seed in cfg.seeds:
        prereqs, missing, calls = _detect_one_seed(
            raw_text, cfg, ablation, seed, client, meter, audit
        )
        per_seed.append((prereqs, missing))
        total_calls += calls

    n = len(per_seed)
    yes_votes = sum(1 for _, missing in per_seed if missing)
    verdict_yes = yes_votes * 2 > n

    counts: dict[str, int] = {}
    by_subject: dict[str, MissingItem] = {}
    for _, missing in per_seed:
        for item in {i.subject: i for i in missing}.values():
            counts[item.subject] = counts.get(item.subject, 0) + 1
            by_subject.setdefault(item.subject, item)
    majority_items = [by_subject[s] for s, c in sorted(counts.items()) if c * 2 > n]

    if verdict_yes and not majority_items:
        majority_items = [by_subject[s] for s in sorted(counts)]
    if not verdict_yes:
        majority_items = []

    prereqs = per_seed[0][0]
    return DetectionResult(
        i_missing="yes" if majority_items else "no",
        missing=tuple(majority_items),
        prerequisites=tuple(prereqs),
        oracle_calls=total_calls,
    )
