from pathlib import Path

import pytest

from goalsat.errors import SchemaError, TaskMismatch
from goalsat.planeval import (
    OOV_PREFIX,
    PlanContext,
    PlanOutput,
    aggregate,
    eval_current,
    eval_next,
    parse_plan_output,
    render_aggregate,
    score_output,
    score_records,
    step_recognition,
)

from plan_expected import EXPECTED, MALFORMED_OUTPUTS, MALFORMED_RECORDS

FIXTURE = Path(__file__).parent / "fixtures" / "plan_outputs.jsonl"


def plan(remaining, next_phase="P5", next_steps=("S22", "S23", "S24", "S25"), current=None):
    return PlanOutput(tuple(remaining), next_phase, tuple(next_steps), "", current)


def test_parse_well_formed(demo):
    raw = '{"remaining_steps": ["S24", "S25"], "next_phase": "P6", "next_phase_steps": ["S27"], "explanation": "x", "extra": 1}'
    out = parse_plan_output(raw, demo.vocabulary)
    assert out.remaining == ("S24", "S25") and out.next_phase == "P6" and out.explanation == "x"


def test_parse_tolerates_prose_and_key_styles(demo):
    raw = 'Plan: {"Remaining steps": ["dye injection"], "Next phase": "P6", "Next-phase steps": []} end'
    out = parse_plan_output(raw, demo.vocabulary)
    assert out.remaining == ("S24",) and out.next_steps == ()


def test_parse_missing_field(demo):
    with pytest.raises(SchemaError):
        parse_plan_output({"remaining_steps": [], "next_phase_steps": []}, demo.vocabulary)
    with pytest.raises(SchemaError):
        parse_plan_output("no json", demo.vocabulary)
    with pytest.raises(SchemaError):
        parse_plan_output({"remaining_steps": "S24", "next_phase": "P6", "next_phase_steps": []}, demo.vocabulary)
    ctx = PlanContext("P5", ("S22",), "S23", "task2")
    s = score_output(ctx, {"remaining_steps": ["S24", "S25"], "next_phase_steps": []}, demo)
    assert s.schema_error and not s.current_ok and not s.next_ok


def test_hallucinated_step_kept(demo):
    out = parse_plan_output({"remaining_steps": ["laser ablation"], "next_phase": "P5", "next_phase_steps": []}, demo.vocabulary)
    assert out.remaining == (OOV_PREFIX + "laser ablation",)


def test_eval_current_examples(demo):
    ctx = PlanContext("P5", ("S22",), "S23", "task2")
    assert eval_current(ctx, plan(["S24", "S25"]), demo)[0] is True
    ok, diags = eval_current(ctx, plan(["S25"]), demo)
    assert ok is False and any("MissingRequired" in d for d in diags)
    ok, diags = eval_current(PlanContext("P5", ("S22",), "S23", "task1"), plan(["S24", "S25"]), demo)
    assert ok is False and diags


def test_eval_current_ignores_prediction_outside_task1(demo):
    ctx = PlanContext("P5", ("S22",), "S23", "task3.2")
    assert eval_current(ctx, plan(["S24", "S25"], current="S40"), demo)[0]
    assert eval_current(ctx, plan(["S24", "S25"], current=None), demo)[0]


def test_eval_next_examples(demo):
    assert eval_next(plan([], "P5", ["S22", "S23", "S24", "S25"]), demo)[0] is True
    ok, diags = eval_next(plan([], "P5", ["S22", "S24", "S23", "S25"]), demo)
    assert ok is False and any("DependencyOrder" in d for d in diags)
    ok, diags = eval_next(plan([], "the end of surgery", []), demo)
    assert ok is False and diags[0].startswith("PhaseUnresolved")


def test_eval_next_uses_predicted_phase_only(demo):
    out = plan([], "jejunal separation", ["S27", "S28"])
    for phase in ("P2", "P5", "P9"):
        ctx = PlanContext(phase, (), None, "task2")
        assert score_output(ctx, {"remaining_steps": [], "next_phase": out.next_phase,
                                  "next_phase_steps": list(out.next_steps)}, demo).next_ok


def test_step_recognition(demo):
    ctx = PlanContext("P5", ("S22",), "S23", "task1")
    assert step_recognition(ctx, plan([], current="S23"))
    assert not step_recognition(ctx, plan([], current="S24"))
    by_label = parse_plan_output(
        {"current_step": "jejunal clamping", "remaining_steps": [], "next_phase": "P5", "next_phase_steps": []},
        demo.vocabulary,
    )
    assert step_recognition(ctx, by_label)
    with pytest.raises(TaskMismatch):
        step_recognition(PlanContext("P5", (), "S23", "task2"), plan([]))


def test_step_ok_present_iff_task1(demo):
    raw = {"remaining_steps": [], "next_phase": "P5", "next_phase_steps": []}
    for task in ("task1", "task2", "task3.1", "task3.2", "task3.3"):
        s = score_output(PlanContext("P5", (), "S22", task), raw, demo)
        assert (s.step_ok is not None) == (task == "task1")


def test_unknown_task():
    with pytest.raises(ValueError):
        PlanContext("P5", task="task9")


def test_fixture_scores(demo):
    run = score_records(FIXTURE.read_text().splitlines(), demo)
    assert run.malformed_records == MALFORMED_RECORDS
    assert run.malformed_outputs == MALFORMED_OUTPUTS
    got = {(r.model, r.task): (r.n, r.step_correct, r.current_correct, r.next_correct) for r in aggregate(run.scores)}
    assert got == EXPECTED


def test_aggregate_counting():
    from goalsat.planeval import PlanScore

    scores = [PlanScore("m", "task2", i < 7, False) for i in range(10)]
    (row,) = aggregate(scores)
    assert row.current_acc == 0.7 and "70.0%" in render_aggregate([row])
    assert aggregate([]) == []
    mixed = aggregate(scores + [PlanScore("m", "task3.1", True, True)])
    assert [r.task for r in mixed] == ["task2", "task3.1"]


def test_render_deterministic(demo):
    lines = FIXTURE.read_text().splitlines()
    a = render_aggregate(aggregate(score_records(lines, demo).scores))
    b = render_aggregate(aggregate(score_records(lines, demo).scores))
    assert a == b
    assert a.splitlines()[0] == "| Task | Metric | alpha | beta |"
    assert "| task1 (real-world) | StepAcc | 50.0% | 50.0% |" in a
    assert "StepAcc" not in "".join(l for l in a.splitlines() if "task2" in l)
    assert render_aggregate([], "markdown") == "| Task | Metric |\n|---|---|\n"
