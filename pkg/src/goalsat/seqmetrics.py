"""Surface similarity metrics (NED, JIS, ROA) and threshold binarization.

Scores are computed as exact fractions and exposed as floats; the
threshold comparison is done on the fractions so that a similarity of
exactly 0.7 is never lost to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from fractions import Fraction
from itertools import combinations
from typing import Sequence

from .rulespec import PhaseRuleSpec, RuleSet, canonical_reference

METRICS = ("NED", "JIS", "ROA")
DEFAULT_THRESHOLD = 0.7


def edit_distance(a: Sequence[str], b: Sequence[str]) -> int:
    """Unit-cost Levenshtein distance over step codes (two-row DP)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def ned_exact(a: Sequence[str], b: Sequence[str]) -> Fraction:
    m = max(len(a), len(b))
    if m == 0:
        return Fraction(0)
    return Fraction(edit_distance(a, b), m)


def jis_exact(a: Sequence[str], b: Sequence[str]) -> Fraction:
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return Fraction(1)
    return Fraction(len(sa & sb), len(union))


def _first_positions(seq: Sequence[str]) -> dict[str, int]:
    pos: dict[str, int] = {}
    for i, c in enumerate(seq):
        pos.setdefault(c, i)
    return pos


def roa_exact(a: Sequence[str], b: Sequence[str]) -> Fraction:
    pa, pb = _first_positions(a), _first_positions(b)
    common = sorted(pa.keys() & pb.keys())
    if len(common) < 2:
        return Fraction(1)
    agree = total = 0
    for x, y in combinations(common, 2):
        total += 1
        if (pa[x] < pa[y]) == (pb[x] < pb[y]):
            agree += 1
    return Fraction(agree, total)


def ned(a: Sequence[str], b: Sequence[str]) -> float:
    return float(ned_exact(a, b))


def jis(a: Sequence[str], b: Sequence[str]) -> float:
    return float(jis_exact(a, b))


def roa(a: Sequence[str], b: Sequence[str]) -> float:
    return float(roa_exact(a, b))


_RAW = {"NED": ned_exact, "JIS": jis_exact, "ROA": roa_exact}


@dataclass(frozen=True)
class MetricConfig:
    threshold: float = DEFAULT_THRESHOLD
    metrics: tuple[str, ...] = METRICS

    def __post_init__(self):
        if not 0 < self.threshold <= 1:
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")
        unknown = set(self.metrics) - set(METRICS)
        if unknown:
            raise ValueError(f"unknown metrics: {sorted(unknown)}")


@dataclass(frozen=True)
class MetricScore:
    metric: str
    raw: float
    similarity: float
    decision: bool
    exact: Fraction = field(repr=False, compare=False, default=Fraction(0))

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "raw": self.raw,
            "similarity": self.similarity,
            "decision": self.decision,
        }


def _threshold(threshold: float) -> Fraction:
    # decimal reading of the configured value: 0.7 means 7/10
    return Fraction(repr(threshold))


def score(metric: str, seq: Sequence[str], reference: Sequence[str], threshold: float = DEFAULT_THRESHOLD) -> MetricScore:
    raw = _RAW[metric](seq, reference)
    sim = 1 - raw if metric == "NED" else raw
    return MetricScore(metric, float(raw), float(sim), sim >= _threshold(threshold), sim)


@lru_cache(maxsize=256)
def _reference(spec: PhaseRuleSpec) -> tuple[str, ...]:
    return canonical_reference(spec)


def score_against_reference(
    seq: Sequence[str], phase: str, rs: RuleSet, cfg: MetricConfig | None = None
) -> dict[str, MetricScore]:
    cfg = cfg or MetricConfig()
    ref = _reference(rs[phase])
    return {m: score(m, tuple(seq), ref, cfg.threshold) for m in cfg.metrics}
