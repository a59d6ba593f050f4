"""Meta-evaluation: score evaluators' binary decisions against rule labels.

A decision is correct iff (decision is valid) == (label is Valid). Reports
are stratified by label plus an Invalid aggregate over OE, CE and BE.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

from .benchgen import LABELS, VALID, LabeledSequence
from .checker import check
from .errors import JudgeUnavailable, ParseFailure
from .rulespec import RuleSet
from .seqmetrics import METRICS, MetricConfig, score_against_reference

logger = logging.getLogger(__name__)

RULE_CHECKER = "RuleChecker"
INVALID = "Invalid"
SUBSETS = (*LABELS, INVALID)
JUDGE_PREFIX = "Judge:"


class Judge(Protocol):
    name: str

    def judge(self, seq: Sequence[str], phase: str, rs: RuleSet): ...


@dataclass
class Cell:
    n: int = 0
    correct: int = 0
    abstained: int = 0

    @property
    def accuracy(self) -> float | None:
        return self.correct / self.n if self.n else None

    def to_dict(self) -> dict:
        return {"n": self.n, "correct": self.correct, "abstained": self.abstained, "accuracy": self.accuracy}


@dataclass
class MetaEvalReport:
    evaluators: list[str] = field(default_factory=list)
    cells: dict[str, dict[str, Cell]] = field(default_factory=dict)
    absent: list[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def cell(self, evaluator: str, subset: str) -> Cell:
        return self.cells[evaluator][subset]

    def accuracy(self, evaluator: str, subset: str) -> float | None:
        return self.cells[evaluator][subset].accuracy

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "evaluators": self.evaluators,
            "absent": self.absent,
            "results": {
                ev: {sub: self.cells[ev][sub].to_dict() for sub in SUBSETS} for ev in self.evaluators if ev in self.cells
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetaEvalReport":
        cells = {
            ev: {sub: Cell(c["n"], c["correct"], c.get("abstained", 0)) for sub, c in subs.items()}
            for ev, subs in data["results"].items()
        }
        return cls(list(data["evaluators"]), cells, list(data.get("absent", [])), dict(data.get("config", {})))


def evaluator_names(metrics: Iterable[str] = METRICS, rule_checker: bool = True, judges: Iterable[str] = ()) -> list[str]:
    out = list(metrics)
    if rule_checker:
        out.append(RULE_CHECKER)
    out.extend(JUDGE_PREFIX + j for j in judges)
    return out


def _judge_decisions(judge: Judge, items: Sequence[LabeledSequence], rs: RuleSet, workers: int):
    def one(item):
        try:
            return judge.judge(item.seq, item.phase, rs).valid
        except ParseFailure:
            return None  # abstention

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(one, items))


def run_metaeval(
    items: Sequence[LabeledSequence],
    rs: RuleSet,
    cfg: MetricConfig | None = None,
    evaluators: Sequence[str] | None = None,
    judges: Sequence[Judge] = (),
    judge_concurrency: int = 4,
    config: dict | None = None,
) -> MetaEvalReport:
    """Score each evaluator on ``items``.

    ``evaluators`` names columns (NED, JIS, ROA, RuleChecker, Judge:<name>);
    by default every metric in ``cfg``, the rule checker and every judge. A
    judge that becomes unreachable is listed in ``report.absent`` and its
    column dropped. Judge abstentions (unparsable answers) count as incorrect.
    """
    cfg = cfg or MetricConfig()
    judge_by_name = {JUDGE_PREFIX + j.name: j for j in judges}
    if evaluators is None:
        evaluators = [*cfg.metrics, RULE_CHECKER, *judge_by_name]
    evaluators = list(evaluators)
    for ev in evaluators:
        if ev not in METRICS and ev != RULE_CHECKER and ev not in judge_by_name:
            raise ValueError(f"unknown evaluator {ev!r}")
    for item in items:
        rs[item.phase]  # raises UnknownPhase early

    metric_cols = [e for e in evaluators if e in METRICS]
    mcfg = MetricConfig(cfg.threshold, tuple(metric_cols)) if metric_cols else None

    decisions: dict[str, list[bool | None]] = {e: [] for e in evaluators}
    for item in items:
        if mcfg is not None:
            scores = score_against_reference(item.seq, item.phase, rs, mcfg)
            for m in metric_cols:
                decisions[m].append(scores[m].decision)
        if RULE_CHECKER in decisions:
            decisions[RULE_CHECKER].append(check(item.seq, item.phase, rs).valid)

    absent = []
    for ev in evaluators:
        if ev in judge_by_name:
            try:
                decisions[ev] = _judge_decisions(judge_by_name[ev], items, rs, judge_concurrency)
            except JudgeUnavailable as exc:
                logger.error("judge column %s absent: %s", ev, exc)
                absent.append(ev)
                del decisions[ev]

    present = [e for e in evaluators if e in decisions]
    report = MetaEvalReport(
        evaluators=present,
        cells={e: {s: Cell() for s in SUBSETS} for e in present},
        absent=absent,
        config={"threshold": cfg.threshold, **(config or {})},
    )
    for ev in present:
        for item, dec in zip(items, decisions[ev]):
            correct = dec is not None and dec == (item.label == VALID)
            subsets = (item.label,) if item.label == VALID else (item.label, INVALID)
            for sub in subsets:
                c = report.cells[ev][sub]
                c.n += 1
                c.correct += correct
                c.abstained += dec is None
    return report


def _pct(acc: float | None) -> str:
    return "" if acc is None else f"{100 * acc:.1f}"


def render_report(report: MetaEvalReport, fmt: str = "markdown") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["evaluator", "subset", "n", "correct", "abstained", "accuracy"])
        for ev in report.evaluators:
            for sub in SUBSETS:
                c = report.cells[ev][sub]
                w.writerow([ev, sub, c.n, c.correct, c.abstained, _pct(c.accuracy)])
        return buf.getvalue()
    if fmt == "markdown":
        cols = report.evaluators
        lines = [
            "| Subset | " + " | ".join(cols) + " |" if cols else "| Subset |",
            "|---|" + "---:|" * len(cols),
        ]
        if cols and any(c.n for ev in cols for c in report.cells[ev].values()):
            for sub in SUBSETS:
                cells = [_pct(report.cells[ev][sub].accuracy) for ev in cols]
                lines.append(f"| {sub} | " + " | ".join(cells) + " |")
        for ev in report.absent:
            lines.append(f"\n_{ev}: absent (judge unavailable)_")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")
