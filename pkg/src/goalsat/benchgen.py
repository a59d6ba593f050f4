"""Labeled meta-evaluation sets: valid variations and injected OE/CE/BE errors.

Every generator works by mutate-then-verify: a candidate is produced, the
checker classifies it, and the candidate is kept only when its class is the
requested label. The checker is the single source of truth for labels.

Randomness comes from :class:`goalsat.rng.CounterRNG`, one stream per
(seed, phase, label), so each phase/label cell can be generated in isolation
and the output does not depend on scheduling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .checker import BE, CE, OE, check_spec
from .core import StepSequence, Vocabulary, first_index, last_index, occurrences, sorted_codes
from .errors import NoApplicableMutation, NoForeignStep, Unsatisfiable
from .rng import CounterRNG
from .rulespec import Anchor, PhaseRuleSpec, RuleSet, canonical_reference, precedence_graph

VALID = "Valid"
LABELS = (VALID, OE, CE, BE)
_ERROR_CLASS = {VALID: None, OE: OE, CE: CE, BE: BE}

MAX_ATTEMPTS = 64


@dataclass(frozen=True)
class LabeledSequence:
    seq: StepSequence
    phase: str
    label: str
    provenance: dict = field(default_factory=dict, compare=False, hash=False)

    def to_dict(self) -> dict:
        return {"phase": self.phase, "steps": list(self.seq), "label": self.label, "provenance": self.provenance}

    @classmethod
    def from_dict(cls, data: dict) -> "LabeledSequence":
        label = data["label"]
        if label not in LABELS:
            raise ValueError(f"unknown label {label!r}")
        return cls(tuple(data["steps"]), data["phase"], label, dict(data.get("provenance", {})))


@dataclass(frozen=True)
class BenchmarkSpec:
    # defaults: 191 valid and 199 invalid items, the invalid split as in the
    # per-subset accuracies of the reference meta-evaluation table
    counts: dict = field(default_factory=lambda: {VALID: 191, OE: 71, CE: 68, BE: 60})
    seed: int = 0
    max_insertions: int = 4
    max_length: int = 16

    def __post_init__(self):
        for label, n in self.counts.items():
            if label not in LABELS:
                raise ValueError(f"unknown label {label!r}")
            if n < 0:
                raise ValueError(f"negative count for {label}")


# ---------------------------------------------------------------------------
# valid sequences


def random_linear_extension(spec: PhaseRuleSpec, rng: CounterRNG) -> list[str]:
    preds = precedence_graph(spec)
    remaining = {c: set(p) for c, p in preds.items()}
    out: list[str] = []
    while remaining:
        ready = sorted_codes(c for c, p in remaining.items() if not p)
        if not ready:
            raise Unsatisfiable(f"{spec.code}: precedence cycle", phase=spec.code)
        pick = rng.choice(ready)
        out.append(pick)
        del remaining[pick]
        for p in remaining.values():
            p.discard(pick)
    return out


def _legal_insertions(seq: list[str], code: str, spec: PhaseRuleSpec) -> list[int]:
    return [p for p in range(len(seq) + 1) if check_spec(seq[:p] + [code] + seq[p:], spec).valid]


def sample_valid(
    spec: PhaseRuleSpec, rng: CounterRNG, max_insertions: int = 4, max_length: int = 16
) -> tuple[StepSequence, str]:
    """Draw one valid sequence and a short description of how it was built.

    A random dependency-respecting order of the required steps receives up to
    ``max_insertions`` ancillary steps (drawn with replacement, so repeats
    occur), each at a uniformly chosen position that keeps the sequence valid.
    """
    seq = random_linear_extension(spec, rng)
    if len(seq) > max_length:
        raise Unsatisfiable(f"{spec.code}: required steps exceed max length {max_length}", phase=spec.code)
    allowed = sorted_codes(spec.allowed)
    budget = min(max_insertions, max_length - len(seq))
    k = rng.randint(0, budget) if allowed and budget > 0 else 0
    inserted = []
    for _ in range(k):
        code = rng.choice(allowed)
        legal = _legal_insertions(seq, code, spec)
        if legal:
            pos = rng.choice(legal)
            seq.insert(pos, code)
            inserted.append(f"{code}@{pos}")
    desc = "order " + ",".join(c for c in seq if c in spec.required)
    if inserted:
        desc += "; insert " + ",".join(inserted)
    return tuple(seq), desc


def gen_valid(
    spec: PhaseRuleSpec,
    rng: CounterRNG,
    n: int,
    max_insertions: int = 4,
    max_length: int = 16,
    seed_label: int | None = None,
) -> list[LabeledSequence]:
    """``n`` distinct valid sequences; the canonical reference comes first."""
    if n <= 0:
        return []
    seen: dict[StepSequence, str] = {}
    ref = canonical_reference(spec)
    if len(ref) <= max_length:
        seen[ref] = "canonical reference"
    budget = 200 + 50 * n
    while len(seen) < n and budget > 0:
        budget -= 1
        seq, desc = sample_valid(spec, rng, max_insertions, max_length)
        seen.setdefault(seq, desc)
    if len(seen) < n:
        raise Unsatisfiable(
            f"{spec.code}: found only {len(seen)} distinct valid sequences of length <= {max_length}, need {n}",
            phase=spec.code,
            label=VALID,
        )
    out = []
    for seq, desc in list(seen.items())[:n]:
        verdict = check_spec(seq, spec)
        assert verdict.valid, (seq, verdict)
        out.append(LabeledSequence(seq, spec.code, VALID, _prov("gen_valid", seed_label, desc)))
    return out


def _prov(generator: str, seed: int | None, mutation: str) -> dict:
    return {"generator": generator, "seed": seed, "mutation": mutation}


# ---------------------------------------------------------------------------
# order errors


def order_targets(spec: PhaseRuleSpec) -> list[str]:
    return [r.id for r in spec.rules()]


def _anchor_pos(seq: Sequence[str], code: str, anchor: Anchor) -> int | None:
    return last_index(seq, code) if anchor is Anchor.LAST else first_index(seq, code)


def _order_mutations(seq: list[str], spec: PhaseRuleSpec, rng: CounterRNG, target: str | None):
    """Candidate (rule_id, mutate) pairs; each mutate() returns (new_seq, description)."""
    cands = []
    for d in spec.dependencies:
        b = _anchor_pos(seq, d.before.code, d.before.anchor)
        if d.after.anchor is Anchor.EACH:
            after = occurrences(seq, d.after.code)
        else:
            a = _anchor_pos(seq, d.after.code, d.after.anchor)
            after = [] if a is None else [a]
        if b is None or not after:
            continue

        def swap(d=d, b=b, after=after):
            a = rng.choice(after)
            out = list(seq)
            out[a], out[b] = out[b], out[a]
            return out, f"order:{d.id} swap {d.before.code}@{b}<->{d.after.code}@{a}"

        cands.append((d.id, swap))
    for g in spec.gates:
        gpos = _anchor_pos(seq, g.gate.code, g.gate.anchor)
        if gpos is None:
            continue

        def move(g=g, gpos=gpos):
            out = list(seq)
            occ = occurrences(out, g.step)
            if occ:
                src = rng.choice(occ)
                out.pop(src)
                gp = gpos - 1 if src < gpos else gpos
                dst = rng.randint(0, gp)
                out.insert(dst, g.step)
                return out, f"order:{g.id} move {g.step}@{src}->{dst}"
            dst = rng.randint(0, gpos)
            out.insert(dst, g.step)
            return out, f"order:{g.id} insert {g.step}@{dst}"

        cands.append((g.id, move))
    for t in spec.terminals:
        tpos = last_index(seq, t.terminal)
        closed = sorted_codes(t.closed)
        if tpos is None or not closed:
            continue

        def reappear(t=t, tpos=tpos, closed=closed):
            code = rng.choice(closed)
            dst = rng.randint(tpos + 1, len(seq))
            out = list(seq)
            out.insert(dst, code)
            return out, f"order:{t.id} reappear {code}@{dst}"

        cands.append((t.id, reappear))
    if target is not None:
        chosen = [c for c in cands if c[0] == target]
        if chosen:
            return chosen
    return cands


def _order_step(seq: list[str], spec: PhaseRuleSpec, rng: CounterRNG, target: str | None):
    cands = _order_mutations(seq, spec, rng, target)
    if not cands:
        raise NoApplicableMutation(f"{spec.code}: no order rule applies to {seq}")
    _, mutate = rng.choice(cands)
    return mutate()


def inject_order_error(
    valid: Sequence[str],
    spec: PhaseRuleSpec,
    rng: CounterRNG,
    target: str | None = None,
    seed_label: int | None = None,
) -> LabeledSequence:
    """Break exactly the ordering of ``valid``: swap a dependency pair, move a
    gated step before its gate, or re-insert a closed step after the terminal.

    ``target`` (a rule id) pins which rule to break when it applies.
    """
    if not spec.has_order_rules:
        raise NoApplicableMutation(f"{spec.code} has no dependencies, gates or terminals")
    base = list(valid)
    for _ in range(MAX_ATTEMPTS):
        out, desc = _order_step(base, spec, rng, target)
        if check_spec(out, spec).error_class == OE:
            return LabeledSequence(tuple(out), spec.code, OE, _prov("inject_order_error", seed_label, desc))
    raise NoApplicableMutation(f"{spec.code}: no order mutation of {tuple(valid)} classifies as OE")


# ---------------------------------------------------------------------------
# content errors


def content_targets(spec: PhaseRuleSpec, vocab: Vocabulary) -> list[str]:
    out = [f"drop:{c}" for c in sorted_codes(spec.required)]
    if vocab.step_codes - spec.permitted:
        out.append("foreign")
    return out


def _content_mutations(seq: list[str], spec: PhaseRuleSpec, vocab: Vocabulary, rng: CounterRNG, target: str | None):
    cands = []
    for code in sorted_codes(spec.required):
        if code not in seq:
            continue
        dropped = [c for c in seq if c != code]
        if not dropped:
            continue
        cands.append((f"drop:{code}", lambda code=code, dropped=dropped: (dropped, f"content:drop {code}")))
    foreign = sorted_codes(vocab.step_codes - spec.permitted)
    if foreign:

        def insert():
            code = rng.choice(foreign)
            dst = rng.randint(0, len(seq))
            out = list(seq)
            out.insert(dst, code)
            return out, f"content:foreign {code}@{dst}"

        cands.append(("foreign", insert))
    if target is not None:
        chosen = [c for c in cands if c[0] == target]
        if chosen:
            return chosen
    return cands


def _content_step(seq, spec, vocab, rng, target):
    cands = _content_mutations(seq, spec, vocab, rng, target)
    if not cands:
        raise NoForeignStep(
            f"{spec.code}: no step outside the phase to insert and no required step can be dropped"
        )
    _, mutate = rng.choice(cands)
    return mutate()


def inject_content_error(
    valid: Sequence[str],
    spec: PhaseRuleSpec,
    vocab: Vocabulary,
    rng: CounterRNG,
    target: str | None = None,
    seed_label: int | None = None,
) -> LabeledSequence:
    """Delete every occurrence of one required step, or insert a step from
    outside the phase. ``target`` is ``"drop:<code>"`` or ``"foreign"``."""
    base = list(valid)
    for _ in range(MAX_ATTEMPTS):
        out, desc = _content_step(base, spec, vocab, rng, target)
        if check_spec(out, spec).error_class == CE:
            return LabeledSequence(tuple(out), spec.code, CE, _prov("inject_content_error", seed_label, desc))
    raise NoApplicableMutation(f"{spec.code}: no content mutation of {tuple(valid)} classifies as CE")


def inject_both(
    valid: Sequence[str],
    spec: PhaseRuleSpec,
    vocab: Vocabulary,
    rng: CounterRNG,
    order_target: str | None = None,
    content_target: str | None = None,
    seed_label: int | None = None,
) -> LabeledSequence:
    if not spec.has_order_rules:
        raise NoApplicableMutation(f"{spec.code} has no dependencies, gates or terminals")
    base = list(valid)
    for attempt in range(MAX_ATTEMPTS):
        # pinned targets can be incompatible (dropping the step that was moved)
        pinned = attempt < MAX_ATTEMPTS // 2
        mid, d1 = _order_step(base, spec, rng, order_target if pinned else None)
        out, d2 = _content_step(mid, spec, vocab, rng, content_target if pinned else None)
        if check_spec(out, spec).error_class == BE:
            return LabeledSequence(tuple(out), spec.code, BE, _prov("inject_both", seed_label, f"{d1}; {d2}"))
    raise NoApplicableMutation(f"{spec.code}: no composed mutation of {tuple(valid)} classifies as BE")


# ---------------------------------------------------------------------------
# whole benchmark


def _phases_for(label: str, rs: RuleSet) -> list[str]:
    phases = rs.phases()
    if label in (OE, BE):
        phases = [p for p in phases if rs[p].has_order_rules]
    return phases


def _allocate(n: int, phases: list[str]) -> dict[str, int]:
    out = {p: 0 for p in phases}
    for k in range(n):
        out[phases[k % len(phases)]] += 1
    return out


def _gen_cell(rs: RuleSet, phase: str, label: str, n: int, bspec: BenchmarkSpec) -> list[LabeledSequence]:
    spec = rs[phase]
    rng = CounterRNG(bspec.seed, phase, label)
    if label == VALID:
        return gen_valid(spec, rng, n, bspec.max_insertions, bspec.max_length, bspec.seed)

    otargets = order_targets(spec)
    ctargets = content_targets(spec, rs.vocabulary)
    # rotate through targets from a random offset so every rule is exercised
    o_off = rng.below(len(otargets)) if otargets else 0
    c_off = rng.below(len(ctargets)) if ctargets else 0
    items = []
    for i in range(n):
        ot = otargets[(o_off + i) % len(otargets)] if otargets else None
        ct = ctargets[(c_off + i) % len(ctargets)] if ctargets else None
        for _ in range(MAX_ATTEMPTS):
            src, _ = sample_valid(spec, rng, bspec.max_insertions, bspec.max_length)
            try:
                if label == OE:
                    item = inject_order_error(src, spec, rng, ot, bspec.seed)
                elif label == CE:
                    item = inject_content_error(src, spec, rs.vocabulary, rng, ct, bspec.seed)
                else:
                    item = inject_both(src, spec, rs.vocabulary, rng, ot, ct, bspec.seed)
            except (NoApplicableMutation, NoForeignStep):
                continue
            items.append(item)
            break
        else:
            raise Unsatisfiable(f"{phase}: could not generate a {label} item", phase=phase, label=label)
    return items


def build_benchmark(rs: RuleSet, bspec: BenchmarkSpec | None = None) -> list[LabeledSequence]:
    """Generate the requested number of items per label, round-robin over phases.

    Output order is canonical: phase code, then label (Valid, OE, CE, BE),
    then ordinal within the cell. Every item is re-checked before emission.
    """
    bspec = bspec or BenchmarkSpec()
    cells: dict[tuple[str, str], list[LabeledSequence]] = {}
    for label in LABELS:
        n = bspec.counts.get(label, 0)
        if n == 0:
            continue
        phases = _phases_for(label, rs)
        if not phases:
            raise Unsatisfiable(f"no phase can produce {label} items", label=label)
        for phase, k in _allocate(n, phases).items():
            if k:
                cells[(phase, label)] = _gen_cell(rs, phase, label, k, bspec)

    out = []
    for phase in rs.phases():
        for label in LABELS:
            for item in cells.get((phase, label), []):
                got = check_spec(item.seq, rs[phase]).error_class
                if got != _ERROR_CLASS[label]:
                    raise AssertionError(f"label drift: {item} checks as {got}")
                out.append(item)
    return out


def to_jsonl(items: Iterable[LabeledSequence]) -> str:
    return "".join(json.dumps(it.to_dict(), sort_keys=True) + "\n" for it in items)


def read_jsonl(text: str) -> list[LabeledSequence]:
    return [LabeledSequence.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
