"""Scoring of structured planner outputs under goal-satisfiability.

Each record pairs an evaluation context (current phase, completed steps,
ground-truth current step, task id) with a model's raw JSON answer. Two plans
are checked: the current phase completed by ``completed + current +
remaining``, and the model's next-phase steps against the phase the model
itself predicted.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .checker import check
from .core import StepSequence, Vocabulary, find_json_object, resolve_phase
from .errors import AmbiguousName, SchemaError, TaskMismatch
from .rulespec import RuleSet

TASKS = ("task1", "task2", "task3.1", "task3.2", "task3.3")
TASK_TITLES = {
    "task1": "real-world",
    "task2": "controlled",
    "task3.1": "structural",
    "task3.2": "description",
    "task3.3": "combined",
}
OOV_PREFIX = "OOV:"

REQUIRED_FIELDS = ("remaining_steps", "next_phase", "next_phase_steps")
_KEY_ALIASES = {
    "remaining": "remaining_steps",
    "next_phase_name": "next_phase",
    "next_steps": "next_phase_steps",
    "predicted_current_step": "current_step",
}


@dataclass(frozen=True)
class PlanContext:
    phase: str
    completed: StepSequence = ()
    current_step: str | None = None
    task: str = "task2"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task id {self.task!r}")


@dataclass(frozen=True)
class PlanOutput:
    remaining: StepSequence
    next_phase: str
    next_steps: StepSequence
    explanation: str = ""
    current_step: str | None = None


@dataclass
class PlanScore:
    model: str
    task: str
    current_ok: bool
    next_ok: bool
    step_ok: bool | None = None
    schema_error: bool = False
    diagnostics: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "task": self.task,
            "current_ok": self.current_ok,
            "next_ok": self.next_ok,
            "step_ok": self.step_ok,
            "schema_error": self.schema_error,
            "diagnostics": self.diagnostics,
        }


def _norm_key(key: str) -> str:
    k = key.strip().lower().replace(" ", "_").replace("-", "_")
    return _KEY_ALIASES.get(k, k)


def resolve_step_name(name: str, vocab: Vocabulary) -> str:
    code = vocab.resolve_step(name)
    return code if code is not None else OOV_PREFIX + name.strip()


def _steps(value: Any, field_name: str, vocab: Vocabulary) -> StepSequence:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise SchemaError(f"{field_name} must be a list of step names")
    return tuple(resolve_step_name(v, vocab) for v in value)


def parse_plan_output(raw: str | Mapping, vocab: Vocabulary) -> PlanOutput:
    """Parse a model answer into a PlanOutput.

    ``raw`` may be a decoded object or text; in text, the first JSON object is
    used. Step names resolve to codes by exact code or label (case-insensitive);
    anything else is kept as an ``OOV:`` code so it fails as a disallowed step.
    """
    obj = raw if isinstance(raw, Mapping) else find_json_object(str(raw))
    if not isinstance(obj, Mapping):
        raise SchemaError("output is not a JSON object")
    data = {_norm_key(k): v for k, v in obj.items() if isinstance(k, str)}
    missing = [f for f in REQUIRED_FIELDS if f not in data]
    if missing:
        raise SchemaError("missing field(s): " + ", ".join(missing))
    if not isinstance(data["next_phase"], str):
        raise SchemaError("next_phase must be a string")
    current = data.get("current_step")
    if current is not None and not isinstance(current, str):
        raise SchemaError("current_step must be a string")
    return PlanOutput(
        remaining=_steps(data["remaining_steps"], "remaining_steps", vocab),
        next_phase=data["next_phase"],
        next_steps=_steps(data["next_phase_steps"], "next_phase_steps", vocab),
        explanation=str(data.get("explanation", "")),
        current_step=resolve_step_name(current, vocab) if current else None,
    )


def eval_current(ctx: PlanContext, out: PlanOutput, rs: RuleSet) -> tuple[bool, list[str]]:
    spec = rs[ctx.phase]
    diags = [f"completed step {c} is not permitted in {ctx.phase}" for c in ctx.completed if c not in spec.permitted]
    if ctx.task == "task1":
        current = out.current_step
        if current is None:
            return False, diags + ["task1 output has no predicted current step"]
    else:
        current = ctx.current_step
        if current is None:
            return False, diags + ["context has no ground-truth current step"]
    verdict = check((*ctx.completed, current, *out.remaining), ctx.phase, rs)
    diags += [f"current: {v.kind.value} {v.message}" for v in verdict.violations]
    return verdict.valid, diags


def eval_next(out: PlanOutput, rs: RuleSet) -> tuple[bool, list[str]]:
    try:
        phase = resolve_phase(rs.vocabulary, out.next_phase)
    except AmbiguousName as exc:
        return False, [f"PhaseUnresolved: {exc}"]
    if phase is None:
        return False, [f"PhaseUnresolved: {out.next_phase!r}"]
    if phase.code not in rs:
        return False, [f"PhaseUnresolved: no rules for {phase.code}"]
    verdict = check(out.next_steps, phase.code, rs)
    return verdict.valid, [f"next ({phase.code}): {v.kind.value} {v.message}" for v in verdict.violations]


def step_recognition(ctx: PlanContext, out: PlanOutput) -> bool:
    if ctx.task != "task1":
        raise TaskMismatch(f"step recognition is scored for task1 only, not {ctx.task}")
    return out.current_step is not None and out.current_step == ctx.current_step


def score_output(ctx: PlanContext, raw: str | Mapping, rs: RuleSet, model: str = "") -> PlanScore:
    try:
        out = parse_plan_output(raw, rs.vocabulary)
    except SchemaError as exc:
        return PlanScore(
            model, ctx.task, False, False, False if ctx.task == "task1" else None, True, [f"SchemaError: {exc}"]
        )
    cur_ok, d1 = eval_current(ctx, out, rs)
    nxt_ok, d2 = eval_next(out, rs)
    step_ok = step_recognition(ctx, out) if ctx.task == "task1" else None
    return PlanScore(model, ctx.task, cur_ok, nxt_ok, step_ok, False, d1 + d2)


def context_from_dict(data: Mapping, vocab: Vocabulary) -> PlanContext:
    completed = tuple(resolve_step_name(s, vocab) for s in data.get("completed", []))
    cur = data.get("current_step")
    return PlanContext(
        phase=data["phase"],
        completed=completed,
        current_step=resolve_step_name(cur, vocab) if cur else None,
        task=data.get("task", "task2"),
    )


@dataclass
class PlanEvalRun:
    scores: list[PlanScore]
    malformed_records: int = 0
    malformed_outputs: int = 0


def score_records(lines: Iterable[str], rs: RuleSet) -> PlanEvalRun:
    """Score model-output JSONL. Broken records are tallied and, when the model
    and task can still be read, scored as failures."""
    run = PlanEvalRun([])
    for line in lines:
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            ctx = context_from_dict(rec["context"], rs.vocabulary)
            model = str(rec.get("model", ""))
            rs[ctx.phase]
        except Exception:
            run.malformed_records += 1
            try:
                rec = json.loads(line)
                task = rec["context"]["task"]
                if task in TASKS:
                    run.scores.append(
                        PlanScore(str(rec.get("model", "")), task, False, False,
                                  False if task == "task1" else None, True, ["malformed record"])
                    )
            except Exception:
                pass
            continue
        score = score_output(ctx, rec.get("output", ""), rs, model)
        run.malformed_outputs += score.schema_error
        run.scores.append(score)
    return run


@dataclass(frozen=True)
class AggregateRow:
    model: str
    task: str
    n: int
    step_correct: int | None
    current_correct: int
    next_correct: int

    @property
    def step_acc(self) -> float | None:
        return None if self.step_correct is None else self.step_correct / self.n

    @property
    def current_acc(self) -> float:
        return self.current_correct / self.n

    @property
    def next_acc(self) -> float:
        return self.next_correct / self.n

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "task": self.task,
            "n": self.n,
            "step_acc": self.step_acc,
            "current_acc": self.current_acc,
            "next_acc": self.next_acc,
        }


def _task_key(task: str) -> int:
    return TASKS.index(task) if task in TASKS else len(TASKS)


def aggregate(scores: Sequence[PlanScore]) -> list[AggregateRow]:
    groups: dict[tuple[str, str], list[PlanScore]] = {}
    for s in scores:
        groups.setdefault((s.model, s.task), []).append(s)
    rows = []
    for (model, task), ss in sorted(groups.items(), key=lambda kv: (_task_key(kv[0][1]), kv[0][0])):
        rows.append(
            AggregateRow(
                model,
                task,
                len(ss),
                sum(bool(s.step_ok) for s in ss) if task == "task1" else None,
                sum(s.current_ok for s in ss),
                sum(s.next_ok for s in ss),
            )
        )
    return rows


def _pct(x: float | None) -> str:
    return "" if x is None else f"{100 * x:.1f}%"


def render_aggregate(rows: Sequence[AggregateRow], fmt: str = "markdown", extra: dict | None = None) -> str:
    if fmt == "json":
        return json.dumps({**(extra or {}), "rows": [r.to_dict() for r in rows]}, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "task", "n", "step_acc", "current_acc", "next_acc"])
        for r in rows:
            w.writerow([r.model, r.task, r.n, _pct(r.step_acc), _pct(r.current_acc), _pct(r.next_acc)])
        return buf.getvalue()
    if fmt != "markdown":
        raise ValueError(f"unknown format {fmt!r}")
    models = sorted({r.model for r in rows})
    by = {(r.task, r.model): r for r in rows}
    header = "| Task | Metric |" + "".join(f" {m} |" for m in models)
    lines = [header, "|---|---|" + "---:|" * len(models)]
    tasks = sorted({r.task for r in rows}, key=_task_key)
    for task in tasks:
        metrics = [("StepAcc", "step_acc")] if task == "task1" else []
        metrics += [("Current", "current_acc"), ("Next", "next_acc")]
        for title, attr in metrics:
            cells = [_pct(getattr(by[(task, m)], attr)) if (task, m) in by else "" for m in models]
            label = f"{task} ({TASK_TITLES.get(task, task)})"
            lines.append(f"| {label} | {title} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
