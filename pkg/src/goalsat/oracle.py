"""Brute-force validity oracle used to cross-check ``checker.check``.

Every rule is written as a literal quantifier over sequence indices, with no
shared helpers from the checker. It is cubic in the sequence length, hence
the length bound.
"""

from __future__ import annotations

from typing import Sequence

from .errors import BoundExceeded
from .rulespec import RuleSet

DEFAULT_BOUND = 10


def _is_anchor(seq, i, code, anchor):
    n = len(seq)
    if seq[i] != code:
        return False
    if anchor == "first":
        return all(seq[k] != code for k in range(0, i))
    if anchor == "last":
        return all(seq[k] != code for k in range(i + 1, n))
    return True  # each


def check_oracle(seq: Sequence[str], phase: str, rs: RuleSet, bound: int = DEFAULT_BOUND) -> bool:
    if len(seq) > bound:
        raise BoundExceeded(f"sequence length {len(seq)} exceeds oracle bound {bound}")
    spec = rs[phase]
    n = len(seq)
    idx = range(n)
    permitted = set(spec.required) | set(spec.allowed)

    if not all(any(seq[i] == r for i in idx) for r in spec.required):
        return False
    if not all(seq[i] in permitted for i in idx):
        return False

    for d in spec.dependencies:
        b, ba = d.before.code, d.before.anchor.value
        a, aa = d.after.code, d.after.anchor.value
        # for all j anchoring `after`, some i anchoring `before` has i < j
        for j in idx:
            if _is_anchor(seq, j, a, aa):
                if not any(_is_anchor(seq, i, b, ba) and i < j for i in idx):
                    return False

    for g in spec.gates:
        gc, ga = g.gate.code, g.gate.anchor.value
        for j in idx:
            if seq[j] == g.step:
                if not any(_is_anchor(seq, i, gc, ga) and i < j for i in idx):
                    return False

    for t in spec.terminals:
        for i in idx:
            for j in idx:
                if _is_anchor(seq, i, t.terminal, "last") and j > i and seq[j] in t.closed:
                    return False

    return True
