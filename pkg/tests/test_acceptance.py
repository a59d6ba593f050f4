"""Acceptance suite: one test per criterion, each reporting PASS/FAIL in the
terminal summary. Sockets are disabled for the whole module."""

import itertools
import json
import random
import socket
import time
from fractions import Fraction
from pathlib import Path

import pytest

from goalsat.benchgen import LABELS, BenchmarkSpec, build_benchmark, gen_valid, inject_both, inject_content_error, read_jsonl
from goalsat.checker import check
from goalsat.cli import main
from goalsat.core import resolve_phase
from goalsat.judgeclient import JudgeClient, JudgeConfig, RecordedTransport, build_prompt, cache_key, parse_decision
from goalsat.errors import ParseFailure
from goalsat.metaeval import INVALID, RULE_CHECKER, run_metaeval
from goalsat.oracle import check_oracle
from goalsat.planeval import aggregate, score_records
from goalsat.rng import CounterRNG
from goalsat.rulespec import canonical_reference, load_builtin, validate_ruleset
from goalsat.seqmetrics import edit_distance, jis_exact, ned_exact, roa_exact, score_against_reference

import oracles
from plan_expected import EXPECTED, MALFORMED_OUTPUTS, MALFORMED_RECORDS
from stress_specs import STRESS_ANCHORS, STRESS_ANCILLARY

FIX = Path(__file__).parent / "fixtures"
CANON = ("S22", "S23", "S24", "S25")


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    def refuse(*args, **kwargs):
        raise OSError("network access is disabled in the acceptance suite")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)


@pytest.mark.criterion(1, "rule checker scores 100% on >=500 items per label, < 5 s")
def test_c1_rule_checker_perfection(demo):
    t0 = time.perf_counter()
    items = build_benchmark(demo, BenchmarkSpec(counts={lab: 500 for lab in LABELS}, seed=0))
    report = run_metaeval(items, demo, evaluators=[RULE_CHECKER])
    elapsed = time.perf_counter() - t0
    for lab in LABELS:
        cell = report.cell(RULE_CHECKER, lab)
        assert cell.n == 500 and cell.correct == 500, lab
    assert elapsed < 5.0, elapsed


@pytest.mark.criterion(2, "checker agrees with brute-force oracle on every sequence of length <= 6, < 30 s")
def test_c2_oracle_equivalence(p5rs):
    cases = [
        (p5rs, "P5", ("S22", "S23", "S24", "S25", "S39")),
        (STRESS_ANCHORS, "X", tuple("ABCDE")),
        (STRESS_ANCILLARY, "X", tuple("ABCDE")),
    ]
    t0 = time.perf_counter()
    for rs, phase, alphabet in cases:
        assert validate_ruleset(rs) == []
        n = disagreements = valid = 0
        for length in range(7):
            for seq in itertools.product(alphabet, repeat=length):
                n += 1
                ok = check_oracle(seq, phase, rs)
                valid += ok
                disagreements += check(seq, phase, rs).valid != ok
        assert n >= 15000 and disagreements == 0, (phase, n, disagreements)
        assert 0 < valid < n
    assert time.perf_counter() - t0 < 30.0


@pytest.mark.criterion(3, "metric identity, symmetry, range on 10k pairs; triangle inequality on 1k triples, < 10 s")
def test_c3_metric_properties():
    rng = random.Random(20240601)
    alphabet = [f"S{i}" for i in range(1, 9)]

    def rand_seq():
        return [rng.choice(alphabet) for _ in range(rng.randint(0, 10))]

    t0 = time.perf_counter()
    for _ in range(10_000):
        a, b = rand_seq(), rand_seq()
        for f in (ned_exact, jis_exact, roa_exact):
            v = f(a, b)
            assert isinstance(v, Fraction) and 0 <= v <= 1
            assert v == f(b, a)
        assert ned_exact(a, a) == 0 and jis_exact(a, a) == 1 and roa_exact(a, a) == 1
    for _ in range(1_000):
        a, b, c = rand_seq(), rand_seq(), rand_seq()
        assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)
    assert time.perf_counter() - t0 < 10.0


@pytest.mark.criterion(4, "directional metric biases on the default seed-0 benchmark, < 10 s")
def test_c4_directional_biases(demo):
    t0 = time.perf_counter()
    items = build_benchmark(demo, BenchmarkSpec(seed=0))
    r = run_metaeval(items, demo)
    pct = {(ev, s): 100 * r.accuracy(ev, s) for ev in ("NED", "JIS", "ROA") for s in ("Valid", "OE", INVALID)}
    print("\n" + json.dumps({f"{k[0]}/{k[1]}": round(v, 1) for k, v in pct.items()}))
    assert pct["NED", INVALID] - pct["NED", "Valid"] >= 20
    assert pct["JIS", INVALID] - pct["JIS", "Valid"] >= 10
    assert pct["ROA", "Valid"] >= 70
    assert pct["ROA", "OE"] <= 50
    assert time.perf_counter() - t0 < 10.0


@pytest.mark.criterion(5, "derived worked examples reproduce their oracle values")
def test_c5_derived_examples(demo, p5rs, p5):
    vocab = p5rs.vocabulary
    # vocabulary
    assert all(resolve_phase(vocab, n).code == "P5" for n in vocab.phase("P5").names())
    assert resolve_phase(vocab, "Anastomosis Test").code == "P5"
    # rules: exhaustive search finds a witness, and the reference is the least valid ordering
    perms = [s for s in itertools.permutations(sorted(p5.required)) if check_oracle(s, "P5", p5rs)]
    assert CANON in perms and validate_ruleset(p5rs) == []
    assert canonical_reference(p5) == CANON == min(perms, key=lambda s: [int(c[1:]) for c in s])
    # checker, each verdict confirmed by the oracle
    for seq, valid, cls in [
        (CANON, True, None),
        (("S22", "S23", "S25"), False, "CE"),
        (("S3", "S22", "S23", "S39", "S24", "S25", "S40"), True, None),
    ]:
        assert check_oracle(seq, "P5", p5rs) is valid
        v = check(seq, "P5", p5rs)
        assert (v.valid, v.error_class) == (valid, cls)
    cases = list(itertools.product(CANON, repeat=4))
    assert len(cases) == 256
    assert all(check(s, "P5", p5rs).valid == check_oracle(s, "P5", p5rs) for s in cases)
    # metrics, each against its oracle
    assert ned_exact(["S22", "S23", "S24"], ["S22", "S24", "S23"]) == oracles.ned(["S22", "S23", "S24"], ["S22", "S24", "S23"]) == Fraction(2, 3)
    assert jis_exact(["S22", "S23"], ["S23", "S24"]) == oracles.jis(["S22", "S23"], ["S23", "S24"]) == Fraction(1, 3)
    assert roa_exact(["S22", "S23", "S24"], ["S22", "S24", "S23"]) == oracles.roa(["S22", "S23", "S24"], ["S22", "S24", "S23"]) == Fraction(2, 3)
    s = score_against_reference(CANON, "P5", p5rs)
    assert all(x.exact == 1 and x.decision for x in s.values())
    trap = ("S3", "S22", "S23", "S39", "S24", "S25")
    assert 1 - oracles.ned(trap, CANON) == Fraction(4, 6) == score_against_reference(trap, "P5", p5rs)["NED"].exact
    swap = ("S22", "S24", "S23", "S25")
    assert oracles.roa(swap, CANON) == Fraction(5, 6) == score_against_reference(swap, "P5", p5rs)["ROA"].exact
    # generators, each output confirmed by the checker
    rng = CounterRNG(0, "acceptance")
    assert gen_valid(p5, rng, 1)[0].seq == CANON
    assert check(("S3", "S22", "S23", "S40", "S24", "S25"), "P5", p5rs).valid
    drop = inject_content_error(CANON, demo["P5"], demo.vocabulary, rng, target="drop:S24")
    assert drop.seq == ("S22", "S23", "S25") and check(drop.seq, "P5", demo).error_class == "CE"
    assert check(("S30",) + CANON, "P5", demo).error_class == "CE"
    both = inject_both(CANON, p5, vocab, rng, "P5.dep.1", "drop:S25")
    assert both.seq == ("S22", "S24", "S23") and check(both.seq, "P5", p5rs).error_class == "BE"


@pytest.mark.criterion(6, "0.7 threshold: rule-valid but NED-invalid, and OE but ROA-valid")
def test_c6_thresholding(p5rs):
    trap = ["S3", "S22", "S23", "S39", "S24", "S25"]
    assert check(trap, "P5", p5rs).valid
    ned = score_against_reference(trap, "P5", p5rs)["NED"]
    assert ned.exact == Fraction(4, 6) and ned.decision is False

    swap = ["S22", "S24", "S23", "S25"]
    assert check(swap, "P5", p5rs).error_class == "OE"
    roa = score_against_reference(swap, "P5", p5rs)["ROA"]
    assert roa.exact == Fraction(5, 6) and roa.decision is True


@pytest.mark.criterion(7, "12-record plan-eval fixture yields the hand-scored accuracies")
def test_c7_planeval_fixture(demo):
    lines = (FIX / "plan_outputs.jsonl").read_text().splitlines()
    assert len(lines) == 12
    run = score_records(lines, demo)
    assert run.malformed_records == MALFORMED_RECORDS and run.malformed_outputs == MALFORMED_OUTPUTS
    rows = aggregate(run.scores)
    got = {(r.model, r.task): (r.n, r.step_correct, r.current_correct, r.next_correct) for r in rows}
    assert got == EXPECTED
    assert {r.task for r in rows} == {"task1", "task2", "task3.1", "task3.2", "task3.3"}
    malformed = [s for s in run.scores if s.schema_error]
    assert len(malformed) == 3 and not any(s.current_ok or s.next_ok for s in malformed)


@pytest.mark.criterion(8, "gen and metaeval are byte-identical across consecutive runs")
def test_c8_determinism(tmp_path, capsys):
    bench, rep = tmp_path / "bench.jsonl", tmp_path / "report"
    outs = []
    for _ in range(2):
        assert main(["gen", "--seed", "13", "--out", str(bench)]) == 0
        assert main(["metaeval", "--benchmark", str(bench), "--format", "markdown,json,csv", "--out", str(rep)]) == 0
        reports = [(rep / f"metaeval.{ext}").read_bytes() for ext in ("md", "json", "csv")]
        outs.append((bench.read_bytes(), *reports, capsys.readouterr().out))
    assert outs[0] == outs[1]
    assert len(outs[0][0].splitlines()) == 390


@pytest.mark.criterion(9, "offline recorded judge reproduces the fixture decisions exactly")
def test_c9_recorded_judge(demo):
    recording = json.loads((FIX / "judge_responses.json").read_text())
    items = read_jsonl((FIX / "judge_bench.jsonl").read_text())
    transport = RecordedTransport(recording["responses"], recording["model"])
    judge = JudgeClient(JudgeConfig.load(FIX / "judge_config.json"), transport)

    expected = []
    for it in items:
        raw = recording["responses"][cache_key(recording["model"], build_prompt(it.seq, it.phase, demo))]
        try:
            expected.append(parse_decision(raw)[0])
        except ParseFailure:
            expected.append(None)
    assert None in expected  # the recording includes an abstention

    for it, want in zip(items, expected):
        if want is None:
            with pytest.raises(ParseFailure):
                judge.judge(it.seq, it.phase, demo)
        else:
            assert judge.judge(it.seq, it.phase, demo).valid is want

    report = run_metaeval(items, demo, judges=[judge], judge_concurrency=4)
    col = "Judge:recorded"
    assert report.absent == [] and col in report.evaluators
    for lab in LABELS:
        sub = [(it, w) for it, w in zip(items, expected) if it.label == lab]
        correct = sum(w is not None and w == (lab == "Valid") for _, w in sub)
        assert (report.cell(col, lab).n, report.cell(col, lab).correct) == (len(sub), correct)
        assert report.cell(col, lab).abstained == sum(w is None for _, w in sub)
