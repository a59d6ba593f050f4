"""Goal-satisfiability checking for phase-structured plans."""

from .checker import BE, CE, OE, Verdict, Violation, ViolationKind, check, classify
from .core import PhaseId, StepId, Vocabulary
from .errors import GoalSatError
from .rulespec import (
    Anchor,
    Dependency,
    GatedAllowance,
    OccurrenceSelector,
    PhaseRuleSpec,
    RuleSet,
    TerminalClosure,
    canonical_reference,
    load_builtin,
    load_rules,
    parse_rules,
    render_rules,
    validate_ruleset,
)
from .seqmetrics import MetricConfig, MetricScore, jis, ned, roa, score

__version__ = "0.1.0"
