"""Command-line entry point.

Subcommands: detect, eval, gen, tune, simulate, ablate.  Exit codes:
0 success (detect: verdict "no"), 1 runtime error, 2 usage/config
error, 3 detect verdict "yes".  All artifact writes go through a
temp-file-plus-rename so interrupted runs never leave partial output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .corpus import dump_jsonl, load_jsonl
from .dsl import parse_problem
from .engine import (
    DEFAULT_THRESHOLD,
    EQUAL_WEIGHTS,
    ConfidenceWeights,
    DetectionResult,
    coverage_detect,
    detect_missing,
    forward_baseline_detect,
)
from .errors import BadConfig, RticaError
from .harness import (
    ALL_TAXONOMY,
    CorpusSpec,
    NoiseModel,
    evaluate,
    format_metrics_table,
    generate_corpus,
    run_ablation_grid,
    simulate_bounds,
    symbolic_ablation_detectors,
    tune_threshold,
)
from .llm import LlmConfig, PhaseToggles, llm_detect
from .problem import Problem, Taxonomy

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING = 3


def _atomic_write(path: str | Path, data: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _emit(args, data: str) -> None:
    if getattr(args, "out", None):
        _atomic_write(args.out, data if data.endswith("\n") else data + "\n")
    else:
        print(data)


def _parse_weights(text: str) -> ConfidenceWeights:
    parts = text.split(",")
    if len(parts) != 3:
        raise BadConfig("weights must be three comma-separated numbers")
    return ConfidenceWeights.of(*(Fraction(p.strip()) for p in parts))


def _parse_fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise BadConfig(f"not a rational number: {text!r}") from exc


_CONFIG_KEYS = {"mode", "threshold", "weights", "llm_config", "seed", "format", "jobs"}


def _load_cli_config(path: str) -> dict[str, str]:
    """key=value lines; '#' starts a comment; unknown keys rejected."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadConfig(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise BadConfig(f"{path}:{lineno}: unknown key '{key}'")
        out[key] = value.strip()
    return out


def _resolve(args, key: str, default, convert=lambda x: x):
    """flags > config file > defaults."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    cfg = getattr(args, "_file_config", {})
    if key in cfg:
        return convert(cfg[key])
    return default


def _print_resolved(args, resolved: dict) -> None:
    if getattr(args, "verbose", False):
        for k in sorted(resolved):
            print(f"config {k} = {resolved[k]}", file=sys.stderr)


# ---------------------------------------------------------------------------
# serialization of results

def _frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)


def _result_json(res: DetectionResult, explain: bool) -> dict:
    out = {
        "i_missing": res.i_missing,
        "missing": [
            {"kind": m.kind.value, "subject": m.subject, "description": m.description}
            for m in sorted(res.missing, key=lambda m: m.subject)
        ],
        "oracle_calls": res.oracle_calls,
    }
    if explain:
        out["prerequisites"] = [
            {
                "subject": q.subject,
                "status": q.status.value,
                "confidence": _frac_str(q.confidence),
                "derivation_path": list(q.derivation_path) if q.derivation_path else None,
            }
            for q in res.prerequisites
        ]
    return out


def _read_problem(path: str) -> Problem:
    if path == "-":
        text = sys.stdin.read()
        return parse_problem(text, problem_id="stdin")
    return parse_problem(Path(path).read_text(), problem_id=Path(path).stem)


# ---------------------------------------------------------------------------
# subcommands

def cmd_detect(args) -> int:
    mode = _resolve(args, "mode", "symbolic")
    threshold = _resolve(args, "threshold", DEFAULT_THRESHOLD, _parse_fraction)
    weights = _resolve(args, "weights", EQUAL_WEIGHTS, _parse_weights)
    llm_config = _resolve(args, "llm_config", None)
    if mode == "llm" and not llm_config:
        print("detect --mode llm requires --llm-config", file=sys.stderr)
        return EXIT_USAGE
    _print_resolved(args, {"mode": mode, "threshold": threshold, "weights": weights})

    problem = _read_problem(args.problem)
    if mode == "symbolic":
        res = detect_missing(problem, threshold, weights)
    elif mode == "forward":
        res = forward_baseline_detect(problem)
    else:
        cfg = LlmConfig.from_file(llm_config)
        text = problem.raw_text or Path(args.problem).read_text()
        audit: Optional[list] = [] if args.explain else None
        res = llm_detect(text, cfg, PhaseToggles(), audit=audit)
        payload = _result_json(res, args.explain)
        if audit is not None:
            payload["audit"] = audit
        _emit(args, json.dumps(payload, indent=2, sort_keys=True))
        return EXIT_MISSING if res.i_missing == "yes" else EXIT_OK

    _emit(args, json.dumps(_result_json(res, args.explain), indent=2, sort_keys=True))
    return EXIT_MISSING if res.i_missing == "yes" else EXIT_OK


def _detector_for(mode: str, threshold, weights):
    if mode == "symbolic":
        return lambda p: detect_missing(p, threshold, weights)
    if mode == "forward":
        return forward_baseline_detect
    if mode == "coverage":
        return coverage_detect
    raise BadConfig(f"eval does not support mode '{mode}'")


def cmd_eval(args) -> int:
    mode = _resolve(args, "mode", "symbolic")
    threshold = _resolve(args, "threshold", DEFAULT_THRESHOLD, _parse_fraction)
    weights = _resolve(args, "weights", EQUAL_WEIGHTS, _parse_weights)
    jobs = _resolve(args, "jobs", 1, int)
    fmt = _resolve(args, "format", "table")
    _print_resolved(args, {"mode": mode, "threshold": threshold, "jobs": jobs})

    corpus = load_jsonl(args.corpus)
    corpus.sort(key=lambda p: p.id)
    metrics = evaluate(
        corpus,
        _detector_for(mode, threshold, weights),
        require_specification=args.require_specification,
        jobs=jobs,
    )
    if fmt == "json":
        _emit(args, json.dumps(metrics.as_dict(), indent=2, sort_keys=True))
    else:
        _emit(args, format_metrics_table([(mode, metrics)]))
    return EXIT_OK


def cmd_gen(args) -> int:
    taxonomy = ALL_TAXONOMY
    if args.taxonomy:
        taxonomy = tuple(Taxonomy(t.strip()) for t in args.taxonomy.split(","))
    spec = CorpusSpec(
        family=args.family,
        n_complete=args.complete,
        n_incomplete=args.incomplete,
        max_gaps=args.max_gaps,
        taxonomy=taxonomy,
        branching=args.branching,
        depth=args.depth,
        max_vars=args.max_vars,
        seed=_resolve(args, "seed", 0, int) or 0,
    )
    problems = generate_corpus(spec)
    _emit(args, dump_jsonl(problems))
    return EXIT_OK


def cmd_tune(args) -> int:
    weights = _resolve(args, "weights", EQUAL_WEIGHTS, _parse_weights)
    corpus = load_jsonl(args.corpus)
    theta, objective = tune_threshold(corpus, args.alpha_cost, weights)
    payload = {
        "theta_star": _frac_str(theta),
        "theta_star_float": float(theta),
        "objective": _frac_str(objective),
        "objective_float": float(objective),
        "alpha_cost": args.alpha_cost,
    }
    _emit(args, json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_simulate(args) -> int:
    nm = NoiseModel(
        alpha=args.alpha,
        beta=args.beta,
        trials=args.trials,
        seed=_resolve(args, "seed", 0, int) or 0,
    )
    if args.corpus:
        corpus = load_jsonl(args.corpus)
    else:
        corpus = generate_corpus(
            CorpusSpec(n_complete=10, n_incomplete=10, max_gaps=2, seed=nm.seed)
        )
    report = simulate_bounds(nm, corpus)
    _emit(args, json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_ablate(args) -> int:
    threshold = _resolve(args, "threshold", DEFAULT_THRESHOLD, _parse_fraction)
    weights = _resolve(args, "weights", EQUAL_WEIGHTS, _parse_weights)
    jobs = _resolve(args, "jobs", 1, int)
    fmt = _resolve(args, "format", "table")
    corpus = load_jsonl(args.corpus)
    corpus.sort(key=lambda p: p.id)
    rows = run_ablation_grid(
        corpus,
        symbolic_ablation_detectors(threshold, weights),
        require_specification=args.require_specification,
        jobs=jobs,
    )
    if fmt == "json":
        payload = {name: (m.as_dict() if m else None) for name, m in rows}
        _emit(args, json.dumps(payload, indent=2, sort_keys=True))
    else:
        _emit(args, format_metrics_table(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(p: argparse.ArgumentParser, *, weights=True, fmt=False, out=True):
    p.add_argument("--config", help="key=value config file (flags take precedence)")
    p.add_argument("--verbose", action="store_true", help="print resolved config to stderr")
    if weights:
        p.add_argument("--threshold", type=_parse_fraction, help="detection threshold θ (default 1/2)")
        p.add_argument("--weights", type=_parse_weights, help="confidence weights 'w1,w2,w3' summing to 1")
    if fmt:
        p.add_argument("--format", choices=("json", "table"), help="output format (default table)")
    if out:
        p.add_argument("--out", help="write output to this file instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rtica",
        description="Backward-reasoning detection of missing information in structured word problems.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="analyze one problem file")
    p.add_argument("problem", help=".rtp problem file, or '-' for stdin")
    p.add_argument("--mode", choices=("symbolic", "llm", "forward"))
    p.add_argument("--llm-config", dest="llm_config", help="LLM endpoint config file")
    p.add_argument("--explain", action="store_true", help="include the prerequisite audit trail")
    _add_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score a detector against a labeled corpus")
    p.add_argument("corpus", help="JSONL corpus file")
    p.add_argument("--mode", choices=("symbolic", "forward", "coverage"))
    p.add_argument("--jobs", type=int, help="parallel workers (default 1)")
    p.add_argument(
        "--require-specification",
        action="store_true",
        help="incomplete problems also need the exact missing set to count as correct",
    )
    _add_common(p, fmt=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen", help="generate a labeled synthetic corpus")
    p.add_argument("--complete", type=int, default=1, help="number of complete problems")
    p.add_argument("--incomplete", type=int, default=1, help="number of incomplete problems")
    p.add_argument("--seed", type=int, help="generation seed (default 0)")
    p.add_argument("--family", choices=("mixed", "tree"), default="mixed")
    p.add_argument("--max-gaps", type=int, default=3, help="max gaps per incomplete problem (1..3)")
    p.add_argument("--branching", type=int, default=2, help="tree branching factor")
    p.add_argument("--depth", type=int, default=3, help="tree depth")
    p.add_argument("--max-vars", type=int, default=12, help="variable cap for the mixed family")
    p.add_argument("--taxonomy", help="comma-separated gap kinds to draw from")
    _add_common(p, weights=False)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("tune", help="grid-search the detection threshold")
    p.add_argument("corpus", help="JSONL corpus file")
    p.add_argument("--alpha-cost", type=float, default=0.5, help="false-negative cost weight in [0,1]")
    _add_common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("simulate", help="empirically check the noisy-detection recall bound")
    p.add_argument("--alpha", type=float, required=True, help="prerequisite-identification accuracy")
    p.add_argument("--beta", type=float, required=True, help="availability-verification accuracy")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, help="simulation seed (default 0)")
    p.add_argument("--corpus", help="JSONL corpus (default: small generated corpus)")
    _add_common(p, weights=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ablate", help="run the component-contribution grid")
    p.add_argument("corpus", help="JSONL corpus file")
    p.add_argument("--jobs", type=int, help="parallel workers (default 1)")
    p.add_argument(
        "--require-specification",
        action="store_true",
        help="score incomplete problems on the exact missing set",
    )
    _add_common(p, fmt=True)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args._file_config = _load_cli_config(args.config) if getattr(args, "config", None) else {}
    except (BadConfig, OSError) as exc:
        print(f"rtica: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except BadConfig as exc:
        print(f"rtica: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RticaError as exc:
        print(f"rtica: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"rtica: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
