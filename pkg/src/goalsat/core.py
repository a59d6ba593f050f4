"""Steps, phases, vocabularies and step sequences.

A step sequence is a plain ``tuple`` of step codes. Codes are opaque strings,
conventionally a letter prefix plus an integer suffix (``S23``, ``P5``); the
suffix drives every deterministic tie-break in the package.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import AmbiguousName, VocabularyError

StepSequence = tuple[str, ...]

_SUFFIX = re.compile(r"^(.*?)(\d+)$")


def code_sort_key(code: str) -> tuple[str, int, str]:
    """Order codes by prefix, then integer suffix (``S9`` < ``S10``)."""
    m = _SUFFIX.match(code)
    if m is None:
        return (code, -1, code)
    return (m.group(1), int(m.group(2)), code)


def sorted_codes(codes: Iterable[str]) -> list[str]:
    return sorted(codes, key=code_sort_key)


def first_index(seq: Sequence[str], code: str) -> int | None:
    for i, c in enumerate(seq):
        if c == code:
            return i
    return None


def last_index(seq: Sequence[str], code: str) -> int | None:
    for i in range(len(seq) - 1, -1, -1):
        if seq[i] == code:
            return i
    return None


def occurrences(seq: Sequence[str], code: str) -> list[int]:
    return [i for i, c in enumerate(seq) if c == code]


def _norm(name: str) -> str:
    return name.strip().casefold()


@dataclass(frozen=True)
class StepId:
    code: str
    label: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.code:
            raise VocabularyError("step code must be non-empty")


@dataclass(frozen=True)
class PhaseId:
    code: str
    label: str | None = field(default=None, compare=False)
    aliases: tuple[str, ...] = field(default=(), compare=False)
    description: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.code:
            raise VocabularyError("phase code must be non-empty")

    def names(self) -> set[str]:
        out = {_norm(self.code)}
        if self.label:
            out.add(_norm(self.label))
        out.update(_norm(a) for a in self.aliases)
        return out


@dataclass(frozen=True)
class Vocabulary:
    steps: tuple[StepId, ...] = ()
    phases: tuple[PhaseId, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "phases", tuple(self.phases))
        seen: set[str] = set()
        for s in self.steps:
            if s.code in seen:
                raise VocabularyError(f"duplicate step code {s.code!r}")
            seen.add(s.code)
        seen.clear()
        aliases: dict[str, str] = {}
        for p in self.phases:
            if p.code in seen:
                raise VocabularyError(f"duplicate phase code {p.code!r}")
            seen.add(p.code)
            for a in p.aliases:
                key = _norm(a)
                if key in aliases and aliases[key] != p.code:
                    raise VocabularyError(
                        f"alias {a!r} used by both {aliases[key]} and {p.code}"
                    )
                aliases[key] = p.code

    @property
    def step_codes(self) -> frozenset[str]:
        return frozenset(s.code for s in self.steps)

    @property
    def phase_codes(self) -> frozenset[str]:
        return frozenset(p.code for p in self.phases)

    def step(self, code: str) -> StepId | None:
        for s in self.steps:
            if s.code == code:
                return s
        return None

    def phase(self, code: str) -> PhaseId | None:
        for p in self.phases:
            if p.code == code:
                return p
        return None

    def step_label(self, code: str) -> str:
        s = self.step(code)
        return s.label if s is not None and s.label else code

    def resolve_step(self, name: str) -> str | None:
        """Exact code or label match, case-insensitive after trimming."""
        key = _norm(name)
        for s in self.steps:
            if _norm(s.code) == key:
                return s.code
        for s in self.steps:
            if s.label and _norm(s.label) == key:
                return s.code
        return None

    def merged(self, other: "Vocabulary") -> "Vocabulary":
        return Vocabulary(self.steps + other.steps, self.phases + other.phases)

    def to_dict(self) -> dict:
        return {
            "steps": [{"code": s.code, "label": s.label} for s in self.steps],
            "phases": [
                {
                    "code": p.code,
                    "label": p.label,
                    "aliases": list(p.aliases),
                    **({"description": p.description} if p.description else {}),
                }
                for p in self.phases
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: Mapping) -> "Vocabulary":
        steps = [StepId(d["code"], d.get("label")) for d in data.get("steps", [])]
        phases = [
            PhaseId(
                d["code"],
                d.get("label"),
                tuple(d.get("aliases", ())),
                d.get("description"),
            )
            for d in data.get("phases", [])
        ]
        return cls(tuple(steps), tuple(phases))

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        return cls.from_dict(json.loads(text))


def resolve_phase(vocab: Vocabulary, name: str) -> PhaseId | None:
    """Match ``name`` against phase codes, labels and aliases.

    Matching is case-insensitive after trimming whitespace; there is no fuzzy
    matching. Raises AmbiguousName when more than one phase matches.
    """
    key = _norm(name)
    if not key:
        return None
    hits = [p for p in vocab.phases if key in p.names()]
    if len(hits) > 1:
        raise AmbiguousName(
            f"{name!r} matches phases {', '.join(p.code for p in hits)}"
        )
    return hits[0] if hits else None


def find_json_object(text: str) -> dict | None:
    """Return the first well-formed JSON object embedded in ``text``."""
    decoder = json.JSONDecoder()
    start = text.find("{")
    while start != -1:
        try:
            obj, _ = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            pass
        else:
            if isinstance(obj, dict):
                return obj
        start = text.find("{", start + 1)
    return None
