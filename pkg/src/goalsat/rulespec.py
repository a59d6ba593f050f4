"""Phase rule specifications and the ``.rules`` text format.

A rules file declares a vocabulary and one block per phase::

    step S23 "jejunal clamping"
    phase_decl P5 "anastomosis test" aliases "leak test"

    phase P5 {
      required: S22, S23, S24, S25
      allowed: S3, S39, S40
      dep: S23 < S24
      gate: S39 after first(S23)
      terminal: last(S25) closes {S22, S23, S24}
    }

``dep`` selectors default to ``first(...)``. Any dep/gate/terminal may carry a
trailing ``as <id>``; otherwise ids are generated as ``<phase>.<kind>.<n>``.
"""

from __future__ import annotations

import graphlib
import heapq
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Mapping

from .core import (
    PhaseId,
    StepId,
    StepSequence,
    Vocabulary,
    code_sort_key,
    sorted_codes,
)
from .errors import (
    CyclicDependencies,
    DuplicatePhase,
    DuplicateRuleId,
    RuleSyntaxError,
    RuleValidationError,
    UnknownPhase,
    UnknownStep,
    VocabularyError,
)

DATA_DIR = Path(__file__).parent / "data"


class Anchor(str, Enum):
    FIRST = "first"
    LAST = "last"
    EACH = "each"


@dataclass(frozen=True)
class OccurrenceSelector:
    code: str
    anchor: Anchor = Anchor.FIRST

    def __str__(self) -> str:
        return f"{self.anchor.value}({self.code})"


@dataclass(frozen=True)
class Dependency:
    """If ``after.code`` occurs, ``before`` must occur strictly earlier."""

    before: OccurrenceSelector
    after: OccurrenceSelector
    id: str

    def __post_init__(self):
        if self.before.anchor is Anchor.EACH:
            raise ValueError("'each' is only allowed on the constrained (right) side of a dep")

    def codes(self) -> set[str]:
        return {self.before.code, self.after.code}


@dataclass(frozen=True)
class GatedAllowance:
    """Every occurrence of ``step`` must come strictly after the gate occurrence."""

    step: str
    gate: OccurrenceSelector
    id: str

    def __post_init__(self):
        if self.gate.anchor is Anchor.EACH:
            raise ValueError("gate selector must be anchored at first or last")

    def codes(self) -> set[str]:
        return {self.step, self.gate.code}


@dataclass(frozen=True)
class TerminalClosure:
    """No code in ``closed`` may appear after the last occurrence of ``terminal``."""

    terminal: str
    closed: frozenset[str]
    id: str

    def codes(self) -> set[str]:
        return {self.terminal, *self.closed}


@dataclass(frozen=True)
class PhaseRuleSpec:
    phase: PhaseId
    required: frozenset[str]
    allowed: frozenset[str] = frozenset()
    dependencies: tuple[Dependency, ...] = ()
    gates: tuple[GatedAllowance, ...] = ()
    terminals: tuple[TerminalClosure, ...] = ()

    @property
    def code(self) -> str:
        return self.phase.code

    @property
    def permitted(self) -> frozenset[str]:
        return self.required | self.allowed

    @property
    def has_order_rules(self) -> bool:
        return bool(self.dependencies or self.gates or self.terminals)

    def rules(self) -> Iterator[Dependency | GatedAllowance | TerminalClosure]:
        yield from self.dependencies
        yield from self.gates
        yield from self.terminals


@dataclass(frozen=True)
class RuleSet:
    vocabulary: Vocabulary
    specs: Mapping[str, PhaseRuleSpec] = field(default_factory=dict)

    def __getitem__(self, phase: str) -> PhaseRuleSpec:
        try:
            return self.specs[phase]
        except KeyError:
            raise UnknownPhase(f"no rules for phase {phase!r}") from None

    def __contains__(self, phase: str) -> bool:
        return phase in self.specs

    def phases(self) -> list[str]:
        return sorted_codes(self.specs)


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.\-]*)
  | (?P<punct>[{}(),<:])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    value: str
    line: int
    col: int


def _tokenize(source: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise RuleSyntaxError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "newline":
            toks.append(_Tok("newline", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind == "string":
            toks.append(_Tok("string", _unquote(text), line, col))
        elif kind in ("ident", "punct"):
            toks.append(_Tok(kind, text, line, col))
        pos = m.end()
    toks.append(_Tok("newline", "\n", line, pos - line_start + 1))
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


def _unquote(text: str) -> str:
    return re.sub(r"\\(.)", r"\1", text[1:-1])


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


# ---------------------------------------------------------------------------
# parser: builds raw statements with positions, then resolves them


@dataclass
class _RawRule:
    kind: str  # dep | gate | terminal
    payload: tuple
    rule_id: str | None
    line: int
    col: int
    refs: list[tuple[str, int, int]]


@dataclass
class _RawPhase:
    code: str
    line: int
    col: int
    required: list[tuple[str, int, int]] = field(default_factory=list)
    allowed: list[tuple[str, int, int]] = field(default_factory=list)
    rules: list[_RawRule] = field(default_factory=list)


class _Parser:
    def __init__(self, source: str):
        self.toks = _tokenize(source)
        self.i = 0
        self.steps: list[tuple[StepId, int]] = []
        self.phase_decls: list[tuple[PhaseId, int]] = []
        self.blocks: list[_RawPhase] = []

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, expected: str) -> RuleSyntaxError:
        t = self.tok
        found = "end of line" if t.kind == "newline" else "end of input" if t.kind == "eof" else repr(t.value)
        return RuleSyntaxError(f"expected {expected}, found {found}", t.line, t.col)

    def expect(self, kind: str, value: str | None = None, what: str | None = None) -> _Tok:
        t = self.tok
        if t.kind != kind or (value is not None and t.value != value):
            raise self.error(what or (repr(value) if value else kind))
        return self.advance()

    def accept(self, kind: str, value: str | None = None) -> _Tok | None:
        t = self.tok
        if t.kind == kind and (value is None or t.value == value):
            return self.advance()
        return None

    def skip_newlines(self):
        while self.tok.kind == "newline":
            self.advance()

    def end_of_statement(self):
        if self.tok.kind not in ("newline", "eof"):
            raise self.error("end of line")
        self.skip_newlines()

    def code(self) -> tuple[str, int, int]:
        t = self.expect("ident", what="a step code")
        return t.value, t.line, t.col

    def code_list(self) -> list[tuple[str, int, int]]:
        out = [self.code()]
        while self.accept("punct", ","):
            out.append(self.code())
        return out

    def parse(self):
        self.skip_newlines()
        while self.tok.kind != "eof":
            t = self.tok
            if t.kind != "ident":
                raise self.error("'step', 'phase_decl' or 'phase'")
            if t.value == "step":
                self.parse_step()
            elif t.value == "phase_decl":
                self.parse_phase_decl()
            elif t.value == "phase":
                self.parse_block()
            else:
                raise self.error("'step', 'phase_decl' or 'phase'")
            self.skip_newlines()

    def parse_step(self):
        kw = self.advance()
        code, _, _ = self.code()
        label = None
        if (s := self.accept("string")) is not None:
            label = s.value
        self.end_of_statement()
        self.steps.append((StepId(code, label), kw.line))

    def parse_phase_decl(self):
        kw = self.advance()
        code, _, _ = self.code()
        label = None
        aliases: list[str] = []
        if (s := self.accept("string")) is not None:
            label = s.value
        if self.accept("ident", "aliases"):
            aliases.append(self.expect("string", what="an alias string").value)
            while self.accept("punct", ","):
                aliases.append(self.expect("string", what="an alias string").value)
        self.end_of_statement()
        self.phase_decls.append((PhaseId(code, label, tuple(aliases)), kw.line))

    def parse_block(self):
        self.advance()
        code, line, col = self.code()
        block = _RawPhase(code, line, col)
        self.expect("punct", "{")
        self.skip_newlines()
        while not self.accept("punct", "}"):
            if self.tok.kind == "eof":
                raise self.error("'}'")
            self.parse_stmt(block)
        self.end_of_statement()
        self.blocks.append(block)

    def parse_stmt(self, block: _RawPhase):
        t = self.expect("ident", what="a statement keyword")
        self.expect("punct", ":")
        if t.value == "required":
            block.required.extend(self.code_list())
            self.end_of_statement()
            return
        if t.value == "allowed":
            block.allowed.extend(self.code_list())
            self.end_of_statement()
            return
        if t.value == "dep":
            before, bref = self.selector()
            self.expect("punct", "<")
            after, aref = self.selector()
            if before.anchor is Anchor.EACH:
                raise RuleSyntaxError("'each' is only allowed on the right side of '<'", bref[1], bref[2])
            payload, refs = (before, after), [bref, aref]
        elif t.value == "gate":
            step = self.code()
            self.expect("ident", "after")
            gate, gref = self.selector()
            if gate.anchor is Anchor.EACH:
                raise RuleSyntaxError("gate selector must be first(...) or last(...)", gref[1], gref[2])
            payload, refs = (step[0], gate), [step, gref]
        elif t.value == "terminal":
            self.expect("ident", "last", what="'last'")
            self.expect("punct", "(")
            term = self.code()
            self.expect("punct", ")")
            self.expect("ident", "closes", what="'closes'")
            self.expect("punct", "{")
            closed = self.code_list()
            self.expect("punct", "}")
            payload, refs = (term[0], tuple(c for c, _, _ in closed)), [term, *closed]
        else:
            raise RuleSyntaxError(
                f"unknown statement {t.value!r}; expected required, allowed, dep, gate or terminal",
                t.line,
                t.col,
            )
        rule_id = None
        if self.accept("ident", "as"):
            rule_id = self.expect("ident", what="a rule id").value
        self.end_of_statement()
        block.rules.append(_RawRule(t.value, payload, rule_id, t.line, t.col, refs))

    def selector(self) -> tuple[OccurrenceSelector, tuple[str, int, int]]:
        t = self.tok
        if t.kind == "ident" and t.value in ("first", "last", "each") and self.toks[self.i + 1].value == "(":
            self.advance()
            self.expect("punct", "(")
            ref = self.code()
            self.expect("punct", ")")
            return OccurrenceSelector(ref[0], Anchor(t.value)), ref
        ref = self.code()
        return OccurrenceSelector(ref[0], Anchor.FIRST), ref


def parse_rules(source: str, vocabulary: Vocabulary | None = None) -> RuleSet:
    """Parse ``.rules`` text into a RuleSet.

    ``vocabulary`` supplies steps/phases declared elsewhere (e.g. a vocabulary
    JSON file); declarations in ``source`` extend it.
    """
    p = _Parser(source)
    p.parse()

    base = vocabulary or Vocabulary()
    try:
        vocab = base.merged(Vocabulary(tuple(s for s, _ in p.steps), tuple(ph for ph, _ in p.phase_decls)))
    except VocabularyError as exc:
        raise RuleValidationError(str(exc)) from None

    known_steps = vocab.step_codes
    specs: dict[str, PhaseRuleSpec] = {}
    rule_ids: set[str] = set()

    for block in p.blocks:
        phase = vocab.phase(block.code)
        if phase is None:
            raise UnknownPhase(f"phase {block.code!r} is not declared", block.line, block.col)
        if block.code in specs:
            raise DuplicatePhase(f"phase {block.code!r} has more than one block", block.line, block.col)

        for code, line, col in block.required + block.allowed + [r for rr in block.rules for r in rr.refs]:
            if code not in known_steps:
                raise UnknownStep(f"step {code!r} is not declared", line, col)

        required = frozenset(c for c, _, _ in block.required)
        allowed = frozenset(c for c, _, _ in block.allowed)
        if not required:
            raise RuleValidationError(f"phase {block.code}: required is non-empty", block.line, block.col)
        overlap = required & allowed
        if overlap:
            c, line, col = next(x for x in block.allowed if x[0] in overlap)
            raise RuleValidationError(f"step {c} is both required and allowed", line, col)
        permitted = required | allowed

        deps, gates, terms = [], [], []
        counters = {"dep": 0, "gate": 0, "terminal": 0}
        for raw in block.rules:
            counters[raw.kind] += 1
            rid = raw.rule_id or f"{block.code}.{raw.kind}.{counters[raw.kind]}"
            if rid in rule_ids:
                raise DuplicateRuleId(f"rule id {rid!r} already used", raw.line, raw.col)
            rule_ids.add(rid)
            for code, line, col in raw.refs:
                if code not in permitted:
                    raise RuleValidationError(
                        f"step {code} is referenced by {rid} but is not permitted in {block.code}", line, col
                    )
            if raw.kind == "dep":
                before, after = raw.payload
                if before.code == after.code:
                    raise RuleValidationError(f"{rid}: a step cannot depend on itself", raw.line, raw.col)
                deps.append(Dependency(before, after, rid))
            elif raw.kind == "gate":
                gates.append(GatedAllowance(raw.payload[0], raw.payload[1], rid))
            else:
                terms.append(TerminalClosure(raw.payload[0], frozenset(raw.payload[1]), rid))

        specs[block.code] = PhaseRuleSpec(phase, required, allowed, tuple(deps), tuple(gates), tuple(terms))

    return RuleSet(vocab, specs)


def load_rules(path: str | Path, vocabulary: Vocabulary | None = None) -> RuleSet:
    return parse_rules(Path(path).read_text(encoding="utf-8"), vocabulary)


def load_builtin(name: str = "demo") -> RuleSet:
    """Load a shipped rules file: ``demo`` or ``multibypass_p5``."""
    return load_rules(DATA_DIR / f"{name}.rules")


def render_rules(rs: RuleSet) -> str:
    """Pretty-print ``rs`` in normal form (explicit anchors and rule ids)."""
    out: list[str] = []
    for s in rs.vocabulary.steps:
        out.append(f"step {s.code}" + (f" {_quote(s.label)}" if s.label is not None else ""))
    if rs.vocabulary.steps:
        out.append("")
    for ph in rs.vocabulary.phases:
        line = f"phase_decl {ph.code}"
        if ph.label is not None:
            line += f" {_quote(ph.label)}"
        if ph.aliases:
            line += " aliases " + ", ".join(_quote(a) for a in ph.aliases)
        out.append(line)
    for code in rs.phases():
        spec = rs.specs[code]
        out.append("")
        out.append(f"phase {code} {{")
        out.append("  required: " + ", ".join(sorted_codes(spec.required)))
        if spec.allowed:
            out.append("  allowed: " + ", ".join(sorted_codes(spec.allowed)))
        for d in spec.dependencies:
            out.append(f"  dep: {d.before} < {d.after} as {d.id}")
        for g in spec.gates:
            out.append(f"  gate: {g.step} after {g.gate} as {g.id}")
        for t in spec.terminals:
            closed = ", ".join(sorted_codes(t.closed))
            out.append(f"  terminal: last({t.terminal}) closes {{{closed}}} as {t.id}")
        out.append("}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# static validation


@dataclass(frozen=True)
class Diagnostic:
    phase: str
    kind: str
    message: str
    rule_id: str | None = None

    def __str__(self) -> str:
        rid = f" [{self.rule_id}]" if self.rule_id else ""
        return f"{self.phase}{rid} {self.kind}: {self.message}"


def precedence_graph(spec: PhaseRuleSpec) -> dict[str, set[str]]:
    """Map each required step to the required steps that must precede it.

    Edges come from dependencies, gates and terminal closures whose codes are
    all required; for a single occurrence per step every anchor collapses to
    the same position, so these edges are exactly what a sequence containing
    each required step once has to respect.
    """
    req = spec.required
    preds: dict[str, set[str]] = {c: set() for c in req}
    for d in spec.dependencies:
        if d.before.code in req and d.after.code in req:
            preds[d.after.code].add(d.before.code)
    for g in spec.gates:
        if g.step in req and g.gate.code in req and g.step != g.gate.code:
            preds[g.step].add(g.gate.code)
    for t in spec.terminals:
        if t.terminal in req:
            for c in t.closed & req:
                if c != t.terminal:
                    preds[t.terminal].add(c)
    return preds


def validate_ruleset(rs: RuleSet) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    known = rs.vocabulary.step_codes
    for code in rs.phases():
        spec = rs.specs[code]
        if code not in rs.vocabulary.phase_codes:
            diags.append(Diagnostic(code, "unknown-phase", "phase is not in the vocabulary"))
        if not spec.required:
            diags.append(Diagnostic(code, "empty-required", "required is non-empty"))
        for c in sorted_codes((spec.required | spec.allowed) - known):
            diags.append(Diagnostic(code, "unknown-step", f"{c} is not in the vocabulary"))
        overlap = spec.required & spec.allowed
        if overlap:
            diags.append(
                Diagnostic(code, "overlap", "required and allowed share " + ", ".join(sorted_codes(overlap)))
            )
        permitted = spec.permitted
        for rule in spec.rules():
            outside = rule.codes() - permitted
            if outside:
                diags.append(
                    Diagnostic(
                        code,
                        "unpermitted-reference",
                        "references steps outside the phase: " + ", ".join(sorted_codes(outside)),
                        rule.id,
                    )
                )
        for d in spec.dependencies:
            if d.before.code == d.after.code:
                diags.append(Diagnostic(code, "self-dependency", f"{d.before.code} depends on itself", d.id))
            elif d.after.code in spec.required and d.before.code not in spec.required:
                diags.append(
                    Diagnostic(
                        code,
                        "implied-requirement",
                        f"required {d.after.code} needs optional {d.before.code} before it",
                        d.id,
                    )
                )
        for g in spec.gates:
            if g.step == g.gate.code:
                diags.append(Diagnostic(code, "self-gate", f"{g.step} is gated on itself and can never occur", g.id))
            elif g.step in spec.required and g.gate.code not in spec.required:
                diags.append(
                    Diagnostic(
                        code,
                        "implied-requirement",
                        f"required {g.step} is gated on optional {g.gate.code}",
                        g.id,
                    )
                )
        for t in spec.terminals:
            if t.terminal in t.closed:
                diags.append(Diagnostic(code, "self-closure", f"{t.terminal} closes itself", t.id))
        cycle = find_cycle(spec)
        if cycle:
            diags.append(Diagnostic(code, "cycle", "precedence cycle: " + " -> ".join(cycle)))
    return diags


def find_cycle(spec: PhaseRuleSpec) -> list[str] | None:
    ts = graphlib.TopologicalSorter(precedence_graph(spec))
    try:
        ts.prepare()
    except graphlib.CycleError as exc:
        return list(exc.args[1])
    return None


def canonical_reference(spec: PhaseRuleSpec) -> StepSequence:
    """Required steps once each, in the least topological order by code suffix."""
    ts = graphlib.TopologicalSorter(precedence_graph(spec))
    try:
        ts.prepare()
    except graphlib.CycleError as exc:
        raise CyclicDependencies(spec.code, list(exc.args[1])) from None
    heap = [(code_sort_key(c), c) for c in ts.get_ready()]
    heapq.heapify(heap)
    out: list[str] = []
    while heap:
        _, c = heapq.heappop(heap)
        out.append(c)
        ts.done(c)
        for nxt in ts.get_ready():
            heapq.heappush(heap, (code_sort_key(nxt), nxt))
    return tuple(out)
