"""Goal-satisfiability checking of a step sequence against a phase's rules."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .core import first_index, last_index, occurrences, sorted_codes
from .rulespec import Anchor, OccurrenceSelector, PhaseRuleSpec, RuleSet


class ViolationKind(str, Enum):
    MISSING_REQUIRED = "MissingRequired"
    DISALLOWED_STEP = "DisallowedStep"
    DEPENDENCY_ORDER = "DependencyOrder"
    GATE_ORDER = "GateOrder"
    TERMINAL_REAPPEARANCE = "TerminalReappearance"

    @property
    def is_content(self) -> bool:
        return self in (ViolationKind.MISSING_REQUIRED, ViolationKind.DISALLOWED_STEP)


# error classes; None means valid
OE, CE, BE = "OE", "CE", "BE"


@dataclass(frozen=True)
class Violation:
    rule_id: str
    kind: ViolationKind
    positions: tuple[int, ...]
    message: str

    def to_dict(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "kind": self.kind.value,
            "positions": list(self.positions),
            "message": self.message,
        }


@dataclass(frozen=True)
class Verdict:
    valid: bool
    violations: tuple[Violation, ...]
    error_class: str | None

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "error_class": self.error_class,
            "violations": [v.to_dict() for v in self.violations],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "Verdict":
        vs = tuple(
            Violation(v["rule_id"], ViolationKind(v["kind"]), tuple(v["positions"]), v["message"])
            for v in data["violations"]
        )
        return cls(data["valid"], vs, data["error_class"])


def classify(violations: Sequence[Violation] | Verdict) -> str | None:
    if isinstance(violations, Verdict):
        violations = violations.violations
    if not violations:
        return None
    content = any(v.kind.is_content for v in violations)
    order = any(not v.kind.is_content for v in violations)
    if content and order:
        return BE
    return CE if content else OE


def _anchor(seq: Sequence[str], sel: OccurrenceSelector) -> int | None:
    if sel.anchor is Anchor.LAST:
        return last_index(seq, sel.code)
    return first_index(seq, sel.code)


def _anchored(seq: Sequence[str], sel: OccurrenceSelector) -> list[int]:
    if sel.anchor is Anchor.EACH:
        return occurrences(seq, sel.code)
    i = _anchor(seq, sel)
    return [] if i is None else [i]


def _content(seq: Sequence[str], spec: PhaseRuleSpec) -> list[Violation]:
    out = []
    permitted = spec.permitted
    for i, code in enumerate(seq):
        if code not in permitted:
            out.append(
                Violation(
                    f"{spec.code}.permitted",
                    ViolationKind.DISALLOWED_STEP,
                    (i,),
                    f"{code} at position {i} is not permitted in {spec.code}",
                )
            )
    present = set(seq)
    for code in sorted_codes(spec.required - present):
        out.append(
            Violation(
                f"{spec.code}.required",
                ViolationKind.MISSING_REQUIRED,
                (),
                f"required step {code} is missing",
            )
        )
    return out


def _dependencies(seq: Sequence[str], spec: PhaseRuleSpec) -> list[Violation]:
    out = []
    for dep in spec.dependencies:
        after = _anchored(seq, dep.after)
        if not after:
            continue
        b = _anchor(seq, dep.before)
        if b is None:
            # a missing required step is already a content violation
            if dep.before.code in spec.required:
                continue
            out.append(
                Violation(
                    dep.id,
                    ViolationKind.DEPENDENCY_ORDER,
                    tuple(after),
                    f"{dep.after.code} occurs but {dep.before.code} never does",
                )
            )
            continue
        bad = [a for a in after if not b < a]
        if bad:
            out.append(
                Violation(
                    dep.id,
                    ViolationKind.DEPENDENCY_ORDER,
                    (b, *bad),
                    f"{dep.before} at {b} must precede {dep.after} at {', '.join(map(str, bad))}",
                )
            )
    return out


def _gates(seq: Sequence[str], spec: PhaseRuleSpec) -> list[Violation]:
    out = []
    for gate in spec.gates:
        occ = occurrences(seq, gate.step)
        if not occ:
            continue
        g = _anchor(seq, gate.gate)
        if g is None:
            if gate.gate.code in spec.required:
                continue
            out.append(
                Violation(
                    gate.id,
                    ViolationKind.GATE_ORDER,
                    tuple(occ),
                    f"{gate.step} occurs but its gate {gate.gate.code} never does",
                )
            )
            continue
        bad = [i for i in occ if i <= g]
        if bad:
            out.append(
                Violation(
                    gate.id,
                    ViolationKind.GATE_ORDER,
                    (g, *bad),
                    f"{gate.step} at {', '.join(map(str, bad))} is only permitted after {gate.gate} at {g}",
                )
            )
    return out


def _terminals(seq: Sequence[str], spec: PhaseRuleSpec) -> list[Violation]:
    out = []
    for term in spec.terminals:
        t = last_index(seq, term.terminal)
        if t is None:
            continue
        bad = [i for i in range(t + 1, len(seq)) if seq[i] in term.closed]
        if bad:
            out.append(
                Violation(
                    term.id,
                    ViolationKind.TERMINAL_REAPPEARANCE,
                    (t, *bad),
                    f"{', '.join(seq[i] for i in bad)} reappear after the last {term.terminal} at {t}",
                )
            )
    return out


def check_spec(seq: Sequence[str], spec: PhaseRuleSpec) -> Verdict:
    seq = tuple(seq)
    violations = (
        _content(seq, spec) + _dependencies(seq, spec) + _gates(seq, spec) + _terminals(seq, spec)
    )
    return Verdict(not violations, tuple(violations), classify(violations))


def check(seq: Sequence[str], phase: str, rs: RuleSet) -> Verdict:
    """Judge ``seq`` against every rule of ``phase``.

    All rules are evaluated so that the OE/CE/BE class is well defined. When
    an order rule's anchor step is absent and that step is required, the
    absence is reported once, as MissingRequired, and not again as an order
    violation. Raises UnknownPhase if ``phase`` has no rules.
    """
    return check_spec(seq, rs[phase])
