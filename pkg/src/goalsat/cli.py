"""Command line entry point: ``goalsat <subcommand>``.

Exit codes: 0 success (or valid), 1 invalid sequence / diagnostics found,
2 malformed input or absent evaluator column, 3 unknown phase,
4 unsatisfiable benchmark request.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import benchgen, metaeval, planeval
from .checker import check
from .core import Vocabulary
from .errors import GoalSatError, RuleSpecError, UnknownPhase, Unsatisfiable
from .judgeclient import JudgeClient, JudgeConfig, RecordedTransport
from .rulespec import DATA_DIR, load_rules, validate_ruleset
from .seqmetrics import DEFAULT_THRESHOLD, METRICS, MetricConfig, score_against_reference

logger = logging.getLogger("goalsat")

EXIT_OK, EXIT_INVALID, EXIT_INPUT, EXIT_PHASE, EXIT_UNSAT = 0, 1, 2, 3, 4

DEFAULTS = {
    "rules": str(DATA_DIR / "demo.rules"),
    "vocab": None,
    "threshold": DEFAULT_THRESHOLD,
    "seed": 0,
    "format": "markdown",
    "judge_config": None,
}


def _effective(args: argparse.Namespace) -> dict:
    """Flags override config-file values, which override defaults."""
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _load_rules(cfg: dict):
    vocab = None
    if cfg.get("vocab"):
        vocab = Vocabulary.from_json(Path(cfg["vocab"]).read_text(encoding="utf-8"))
    return load_rules(cfg["rules"], vocab)


def _seq(text: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def _echo(cfg: dict, *keys: str) -> dict:
    return {k: cfg[k] for k in keys}


def cmd_check(args, cfg) -> int:
    rs = _load_rules(cfg)
    if args.phase not in rs:
        print(json.dumps({"error": f"unknown phase {args.phase!r}"}))
        return EXIT_PHASE
    verdict = check(_seq(args.seq), args.phase, rs)
    print(verdict.to_json(indent=2))
    return EXIT_OK if verdict.valid else EXIT_INVALID


def cmd_validate(args, cfg) -> int:
    rs = _load_rules(cfg)
    diags = validate_ruleset(rs)
    for d in diags:
        print(d)
    if not diags:
        print(f"ok: {len(rs.specs)} phase(s), {sum(len(list(s.rules())) for s in rs.specs.values())} rule(s)")
    return EXIT_INVALID if diags else EXIT_OK


def cmd_score(args, cfg) -> int:
    rs = _load_rules(cfg)
    if args.phase not in rs:
        print(json.dumps({"error": f"unknown phase {args.phase!r}"}))
        return EXIT_PHASE
    scores = score_against_reference(_seq(args.seq), args.phase, rs, MetricConfig(cfg["threshold"]))
    print(json.dumps({"config": _echo(cfg, "threshold"), "scores": {m: s.to_dict() for m, s in scores.items()}}, indent=2))
    return EXIT_OK


def _parse_counts(args) -> dict:
    counts = dict(benchgen.BenchmarkSpec().counts)
    if args.counts:
        for part in args.counts.split(","):
            label, _, n = part.partition("=")
            label = label.strip()
            if label not in benchgen.LABELS:
                raise ValueError(f"unknown label {label!r} in --counts")
            counts[label] = int(n)
    return counts


def cmd_gen(args, cfg) -> int:
    rs = _load_rules(cfg)
    bspec = benchgen.BenchmarkSpec(
        counts=_parse_counts(args),
        seed=int(cfg["seed"]),
        max_insertions=args.max_insertions,
        max_length=args.max_length,
    )
    try:
        items = benchgen.build_benchmark(rs, bspec)
    except Unsatisfiable as exc:
        print(json.dumps({"error": str(exc), "phase": exc.phase, "label": exc.label}), file=sys.stderr)
        return EXIT_UNSAT
    _write(benchgen.to_jsonl(items), args.out)
    summary = {
        "config": {
            "rules": cfg["rules"],
            "seed": bspec.seed,
            "counts": bspec.counts,
            "max_insertions": bspec.max_insertions,
            "max_length": bspec.max_length,
        },
        "total": len(items),
        "by_label": {lab: sum(it.label == lab for it in items) for lab in benchgen.LABELS},
    }
    print(json.dumps(summary, sort_keys=True), file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def _judges(cfg: dict, args) -> list:
    paths = cfg.get("judge_config")
    if not paths:
        return []
    if isinstance(paths, str):
        paths = [paths]
    judges = []
    for path in paths:
        jcfg = JudgeConfig.load(path)
        transport = RecordedTransport.load(args.judge_fixture) if args.judge_fixture else None
        judges.append(JudgeClient(jcfg, transport))
    return judges


def cmd_metaeval(args, cfg) -> int:
    rs = _load_rules(cfg)
    try:
        items = benchgen.read_jsonl(Path(args.benchmark).read_text(encoding="utf-8"))
        for it in items:
            rs[it.phase]
    except (ValueError, KeyError, UnknownPhase) as exc:
        print(f"malformed benchmark: {exc}", file=sys.stderr)
        return EXIT_INPUT
    judges = _judges(cfg, args)
    evaluators = None
    if args.evaluators:
        evaluators = [e.strip() for e in args.evaluators.split(",") if e.strip()]
    seeds = sorted({str(it.provenance.get("seed")) for it in items})
    echo = {
        "rules": cfg["rules"],
        "benchmark": args.benchmark,
        "seed": seeds[0] if len(seeds) == 1 else seeds,
        "items": len(items),
    }
    report = metaeval.run_metaeval(
        items,
        rs,
        MetricConfig(float(cfg["threshold"])),
        evaluators,
        judges,
        judge_concurrency=args.judge_concurrency,
        config=echo,
    )
    formats = [f.strip() for f in str(cfg["format"]).split(",")]
    ext = {"markdown": "md", "json": "json", "csv": "csv"}
    for fmt in formats:
        text = metaeval.render_report(report, fmt)
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"metaeval.{ext[fmt]}").write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    return EXIT_INPUT if report.absent else EXIT_OK


def cmd_planeval(args, cfg) -> int:
    rs = _load_rules(cfg)
    lines = Path(args.input).read_text(encoding="utf-8").splitlines()
    run = planeval.score_records(lines, rs)
    rows = planeval.aggregate(run.scores)
    extra = {
        "config": {"rules": cfg["rules"], "input": args.input},
        "malformed_records": run.malformed_records,
        "malformed_outputs": run.malformed_outputs,
    }
    fmt = str(cfg["format"])
    _write(planeval.render_aggregate(rows, fmt, extra), args.out)
    print(
        f"scored {len(run.scores)} record(s); malformed records: {run.malformed_records}, "
        f"malformed outputs: {run.malformed_outputs}",
        file=sys.stderr,
    )
    return EXIT_INPUT if run.malformed_records else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default values for the flags below")
    common.add_argument("--rules", help="rules file (default: the shipped demo rule set)")
    common.add_argument("--vocab", help="vocabulary JSON merged under the rules file's declarations")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = argparse.ArgumentParser(prog="goalsat", description="Goal-satisfiability checking and planning-metric meta-evaluation.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", parents=[common], help="check one step sequence against a phase")
    c.add_argument("--phase", required=True, help="phase code, e.g. P5")
    c.add_argument("--seq", required=True, help="comma-separated step codes, e.g. S22,S23,S24,S25")
    c.set_defaults(func=cmd_check)

    v = sub.add_parser("validate", parents=[common], help="static diagnostics for a rules file")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("score", parents=[common], help="NED/JIS/ROA of a sequence against the canonical reference")
    s.add_argument("--phase", required=True, help="phase code")
    s.add_argument("--seq", required=True, help="comma-separated step codes")
    s.add_argument("--threshold", type=float, help=f"similarity threshold (default {DEFAULT_THRESHOLD})")
    s.set_defaults(func=cmd_score)

    g = sub.add_parser("gen", parents=[common], help="generate a labeled benchmark as JSONL")
    g.add_argument("--counts", help="per-label counts, e.g. Valid=191,OE=71,CE=68,BE=60")
    g.add_argument("--seed", type=int, help="random seed (default 0)")
    g.add_argument("--max-insertions", type=int, default=4, help="ancillary insertions per valid sequence")
    g.add_argument("--max-length", type=int, default=16, help="maximum valid sequence length")
    g.add_argument("--out", help="output JSONL path (default stdout)")
    g.set_defaults(func=cmd_gen)

    m = sub.add_parser("metaeval", parents=[common], help="stratified accuracy of metrics and judges")
    m.add_argument("--benchmark", required=True, help="benchmark JSONL from 'gen'")
    m.add_argument("--evaluators", help=f"comma-separated columns from {', '.join(METRICS)}, RuleChecker, Judge:<name>")
    m.add_argument("--threshold", type=float, help=f"similarity threshold (default {DEFAULT_THRESHOLD})")
    m.add_argument("--format", help="comma-separated formats: markdown, json, csv")
    m.add_argument("--judge-config", dest="judge_config", action="append", help="judge JSON config (repeatable)")
    m.add_argument("--judge-fixture", help="recorded judge responses to replay instead of HTTP")
    m.add_argument("--judge-concurrency", type=int, default=4, help="max in-flight judge requests")
    m.add_argument("--out", help="directory for metaeval.{md,json,csv} (default stdout)")
    m.set_defaults(func=cmd_metaeval)

    pl = sub.add_parser("planeval", parents=[common], help="score planner outputs (JSONL)")
    pl.add_argument("--input", required=True, help="model-output JSONL")
    pl.add_argument("--format", help="markdown, json or csv")
    pl.add_argument("--out", help="output path (default stdout)")
    pl.set_defaults(func=cmd_planeval)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _effective(args)
        return args.func(args, cfg)
    except RuleSpecError as exc:
        print(f"rules error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError, GoalSatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
