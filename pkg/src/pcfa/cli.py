"""Command-line surface: compile, check, certify, mine, sample, summarize,
metrics, pareto-plot.

Exit codes: 0 success (certify: fair), 1 usage error, 2 input or validation
error, 3 unfair verdict from certify.  JSON output uses sorted keys and
shortest-round-trip floats; CSV pattern files use ';' columns, '&'-joined
Var=Value pairs, and 17-significant-digit floats, so reruns with a fixed seed
are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from typing import List, Optional, Sequence

from . import __version__
from .circuit import Circuit, parse_circuit, write_circuit
from .errors import PCError
from .learn import LearnConfig, learn_chow_liu, learn_naive_bayes, load_dataset
from .metrics import group_fairness_report
from .patterns import (
    Pattern,
    PatternSet,
    ScoredPattern,
    format_assignment,
    parse_assignment,
)
from .sampling import SamplerConfig, sample_patterns_basic, sample_patterns_memo
from .search import SearchConfig, certify_fair, find_all_patterns, find_topk
from .summaries import candidate_minimal, maximal_patterns, minimal_patterns, pareto_front

PATTERN_HEADER = "x;y;delta;probability;divergence"


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _load_model(path: str) -> Circuit:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_circuit(fh.read())


def _digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _envelope(args, circuit_path: Optional[str], mode: dict, results, stats: Optional[dict]) -> str:
    doc = {
        "tool": "pcfa",
        "version": __version__,
        "command": list(args._argv),
        "circuit_sha256": _digest(circuit_path) if circuit_path else None,
        "mode": mode,
        "results": results,
        "stats": stats or {},
    }
    return json.dumps(doc, sort_keys=True) + "\n"


def _patterns_to_csv(c: Circuit, patterns: Sequence[ScoredPattern]) -> str:
    lines = [PATTERN_HEADER]
    for sp in patterns:
        div = "" if sp.divergence is None else _fmt(sp.divergence)
        lines.append(";".join([
            format_assignment(c.schema, sp.pattern.x),
            format_assignment(c.schema, sp.pattern.y),
            _fmt(sp.delta),
            _fmt(sp.probability),
            div,
        ]))
    return "\n".join(lines) + "\n"


def _patterns_to_json(c: Circuit, ps: PatternSet) -> dict:
    items = []
    for sp in ps:
        items.append({
            "x": [f"{c.schema.variables[v].name}={c.schema.variables[v].labels[val]}"
                  for v, val in sp.pattern.x],
            "y": [f"{c.schema.variables[v].name}={c.schema.variables[v].labels[val]}"
                  for v, val in sp.pattern.y],
            "delta": sp.delta,
            "probability": sp.probability,
            "divergence": sp.divergence,
        })
    return {"patterns": items, "delta": ps.delta, "complete": ps.complete,
            "provenance": ps.provenance}


def _read_pattern_file(c: Circuit, path: str, assume_complete: bool, delta: float) -> PatternSet:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    patterns: List[ScoredPattern] = []
    if path.endswith(".json"):
        doc = json.loads(text)
        for item in doc["patterns"]:
            x = tuple(sorted(parse_assignment(c.schema, "&".join(item["x"]))))
            y = tuple(sorted(parse_assignment(c.schema, "&".join(item["y"]))))
            patterns.append(ScoredPattern(Pattern(x, y), item["delta"], item["probability"],
                                          divergence=item.get("divergence")))
        return PatternSet(patterns, doc.get("delta", delta),
                          complete=doc.get("complete", assume_complete),
                          provenance=doc.get("provenance", "file"))
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines and lines[0] == PATTERN_HEADER:
        lines = lines[1:]
    for ln in lines:
        cells = ln.split(";")
        x = parse_assignment(c.schema, cells[0])
        y = parse_assignment(c.schema, cells[1])
        div = float(cells[4]) if len(cells) > 4 and cells[4] else None
        patterns.append(ScoredPattern(Pattern(x, y), float(cells[2]), float(cells[3]),
                                      divergence=div))
    return PatternSet(patterns, delta, complete=assume_complete, provenance="file")


# -- subcommands -------------------------------------------------------------


def _cmd_compile(args) -> int:
    with open(args.csv, "r", encoding="utf-8") as fh:
        csv_text = fh.read()
    with open(args.schema, "r", encoding="utf-8") as fh:
        schema_config = json.load(fh)
    if args.bins is not None:
        schema_config["bins"] = args.bins
    ds = load_dataset(csv_text, schema_config)
    cfg = LearnConfig(smoothing=args.smoothing, structure=args.structure,
                      numeric_bins=schema_config.get("bins", 4))
    c = learn_naive_bayes(ds, cfg) if args.structure == "nb" else learn_chow_liu(ds, cfg)
    _emit(write_circuit(c), args.out)
    return 0


def _cmd_check(args) -> int:
    c = _load_model(args.model)
    rep = c.report
    results = {
        "smooth": rep.smooth,
        "decomposable": rep.decomposable,
        "deterministic": rep.deterministic,
        "decision_rooted": rep.decision_rooted,
        "compatible": rep.compatible,
        "problems": rep.problems,
        "nodes": len(c.nodes),
    }
    if args.format == "json":
        _emit(_envelope(args, args.model, {"command": "check"}, results, None), args.out)
    else:
        lines = [f"{k}: {v}" for k, v in results.items() if k != "problems"]
        lines += [f"problem: {p}" for p in rep.problems]
        _emit("\n".join(lines) + "\n", args.out)
    return 0 if rep.all_ok else 2


def _cmd_certify(args) -> int:
    c = _load_model(args.model)
    res = certify_fair(c, args.delta)
    stats = {"visited_assignments": res.stats.visited_assignments,
             "pruned_subtrees": res.stats.pruned_subtrees,
             "wall_time_ms": res.stats.wall_time_ms}
    if args.format == "json":
        witness = None
        if res.witness is not None:
            witness = {
                "x": format_assignment(c.schema, res.witness.pattern.x),
                "y": format_assignment(c.schema, res.witness.pattern.y),
                "delta": res.witness.delta,
                "probability": res.witness.probability,
            }
        results = {"fair": res.fair, "delta": args.delta, "witness": witness}
        _emit(_envelope(args, args.model, {"command": "certify"}, results, stats), args.out)
    elif res.fair:
        _emit("FAIR\n", args.out)
    else:
        w = res.witness
        _emit("UNFAIR x={} y={} delta={}\n".format(
            format_assignment(c.schema, w.pattern.x) or "-",
            format_assignment(c.schema, w.pattern.y) or "-",
            _fmt(w.delta)), args.out)
    return 0 if res.fair else 3


def _cmd_mine(args) -> int:
    c = _load_model(args.model)
    if args.top is not None:
        cfg = SearchConfig(delta=args.delta, mode="topk", k=args.top, rank=args.rank)
        found, stats = find_topk(c, cfg)
        ps = PatternSet(found, args.delta, complete=True,
                        provenance=f"search:top{args.top}:{args.rank}")
    else:
        cfg = SearchConfig(delta=args.delta, mode="all")
        ps, stats = find_all_patterns(c, cfg)
    return _emit_patterns(args, c, ps, {
        "command": "mine", "delta": args.delta, "top": args.top, "rank": args.rank,
    }, {"visited_assignments": stats.visited_assignments,
        "pruned_subtrees": stats.pruned_subtrees,
        "wall_time_ms": stats.wall_time_ms})


def _cmd_sample(args) -> int:
    c = _load_model(args.model)
    cfg = SamplerConfig(delta=args.delta, time_budget_ms=args.timeout_ms,
                        seed=args.seed, variant=args.variant, max_runs=args.max_runs)
    sampler = sample_patterns_basic if args.variant == "basic" else sample_patterns_memo
    ps, runs = sampler(c, cfg)
    return _emit_patterns(args, c, ps, {
        "command": "sample", "delta": args.delta, "variant": args.variant,
        "seed": args.seed,
    }, {"runs": len(runs),
        "evaluations": sum(r.evaluations for r in runs)})


def _emit_patterns(args, c: Circuit, ps: PatternSet, mode: dict, stats: dict) -> int:
    if args.format == "json":
        results = _patterns_to_json(c, ps)
        _emit(_envelope(args, args.model, mode, results, stats), args.out)
    else:
        _emit(_patterns_to_csv(c, ps.patterns), args.out)
    return 0


def _cmd_summarize(args) -> int:
    c = _load_model(args.model)
    ps = _read_pattern_file(c, args.infile, assume_complete=not args.partial,
                            delta=args.delta)
    if args.kind == "pareto":
        chosen = pareto_front(ps, weak=args.weak)
    elif args.kind == "maximal":
        chosen = maximal_patterns(c, ps, args.delta, allow_partial=args.partial)
    else:
        cands = candidate_minimal(c, ps, args.delta, allow_partial=args.partial)
        chosen = minimal_patterns(c, cands, ps)
    out_set = PatternSet(list(chosen), args.delta, complete=ps.complete,
                         provenance=f"summary:{args.kind}"
                                    + (":relative" if not ps.complete else ""))
    return _emit_patterns(args, c, out_set, {
        "command": "summarize", "kind": args.kind, "relative": not ps.complete,
    }, {})


def _cmd_metrics(args) -> int:
    c = _load_model(args.model)
    deltas = [float(tok) for tok in args.deltas.split(",") if tok] if args.deltas else []
    rep = group_fairness_report(c, deltas, classifier_threshold=args.classifier_threshold)
    results = {
        "di": rep.di, "sp": rep.sp, "sp1": rep.sp1, "eo": rep.eo,
        "pattern_counts": {_fmt(k): v for k, v in rep.pattern_counts.items()},
        "highest_delta": rep.highest_delta,
        "classifier_threshold": rep.classifier_threshold,
    }
    if args.format == "json":
        _emit(_envelope(args, args.model, {"command": "metrics"}, results, None), args.out)
    else:
        lines = [f"DI: {_fmt(rep.di)}", f"SP: {_fmt(rep.sp)}", f"SP1: {_fmt(rep.sp1)}",
                 f"EO: {_fmt(rep.eo)}"]
        for k, v in rep.pattern_counts.items():
            lines.append(f"patterns({_fmt(k)}): {v}")
        lines.append(f"highest_delta: {_fmt(rep.highest_delta)}")
        _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_pareto_plot(args) -> int:
    c = _load_model(args.model)
    ps, _ = find_all_patterns(c, SearchConfig(delta=args.delta, mode="all"))
    front_keys = {sp.pattern.key() for sp in pareto_front(ps)}
    lines = ["probability;delta;front"]
    for sp in sorted(ps, key=lambda s: (s.probability, -s.delta, s.pattern.key())):
        lines.append(";".join([
            _fmt(sp.probability), _fmt(sp.delta),
            "1" if sp.pattern.key() in front_keys else "0",
        ]))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


# -- parser -------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcfa",
                                     description="Discrimination-pattern audits "
                                                 "for probabilistic circuits")
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("PCFA_THREADS", "1")),
                        help="worker hint; execution is single-threaded and "
                             "results never depend on this value")
    sub = parser.add_subparsers(dest="cmd", required=True)

    def common(p, model=True):
        if model:
            p.add_argument("--model", required=True, help="circuit file")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=["csv", "json"], default="csv")

    p = sub.add_parser("compile", help="compile a CSV dataset into a circuit")
    p.add_argument("--csv", required=True)
    p.add_argument("--schema", required=True, help="schema config JSON")
    p.add_argument("--structure", choices=["nb", "chowliu"], default="nb")
    p.add_argument("--smoothing", type=float, default=1.0)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_compile)

    p = sub.add_parser("check", help="validate circuit structure")
    common(p)
    p.set_defaults(func=_cmd_check, format="text")
    p.add_argument("--json", dest="format", action="store_const", const="json")

    p = sub.add_parser("certify", help="certify delta-fairness (exit 3 when unfair)")
    common(p)
    p.add_argument("--delta", type=float, required=True)
    p.set_defaults(func=_cmd_certify, format="text")
    p.add_argument("--json", dest="format", action="store_const", const="json")

    p = sub.add_parser("mine", help="exact pattern mining")
    common(p)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--top", type=int, default=None)
    p.add_argument("--rank", choices=["disc", "div"], default="disc")
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("sample", help="randomized pattern mining")
    common(p)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--timeout-ms", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--variant", choices=["basic", "memo"], default="basic")
    p.add_argument("--max-runs", type=int, default=None)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("summarize", help="maximal / minimal / pareto summaries")
    common(p)
    p.add_argument("--in", dest="infile", required=True, help="pattern file (csv or json)")
    p.add_argument("--kind", choices=["maximal", "minimal", "pareto"], required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--partial", action="store_true",
                   help="input is a sampled (incomplete) set; summaries are "
                        "relative to it")
    p.add_argument("--weak", action="store_true",
                   help="keep exactly tied points on the pareto front")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("metrics", help="group fairness metrics")
    common(p)
    p.add_argument("--deltas", default="", help="comma-separated thresholds "
                                                "for pattern counts")
    p.add_argument("--classifier-threshold", type=float, default=0.5)
    p.set_defaults(func=_cmd_metrics, format="text")
    p.add_argument("--json", dest="format", action="store_const", const="json")

    p = sub.add_parser("pareto-plot", help="probability/delta of all patterns "
                                           "with a front flag")
    p.add_argument("--model", required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_pareto_plot)

    return parser


def run(argv: Sequence[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    args._argv = list(argv)
    try:
        return args.func(args)
    except PCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
