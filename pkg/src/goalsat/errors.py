"""Exception hierarchy shared across the package."""

from __future__ import annotations


class GoalSatError(Exception):
    pass


class AmbiguousName(GoalSatError):
    """A name resolved to more than one phase."""


class VocabularyError(GoalSatError):
    pass


class RuleSpecError(GoalSatError):
    """Base for rule-file problems; carries an optional source position."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message = message
        self.line = line
        self.column = column
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            message = f"{where}: {message}"
        super().__init__(message)


class RuleSyntaxError(RuleSpecError):
    pass


class UnknownStep(RuleSpecError):
    pass


class UnknownPhase(RuleSpecError):
    pass


class DuplicatePhase(RuleSpecError):
    pass


class DuplicateRuleId(RuleSpecError):
    pass


class RuleValidationError(RuleSpecError):
    pass


class CyclicDependencies(GoalSatError):
    def __init__(self, phase: str, cycle: list[str]):
        self.phase = phase
        self.cycle = cycle
        super().__init__(f"{phase}: precedence cycle among required steps: {' -> '.join(cycle)}")


class BoundExceeded(GoalSatError):
    pass


# benchmark generation


class Unsatisfiable(GoalSatError):
    def __init__(self, message: str, phase: str | None = None, label: str | None = None):
        self.phase = phase
        self.label = label
        super().__init__(message)


class NoApplicableMutation(GoalSatError):
    pass


class NoForeignStep(GoalSatError):
    pass


# judges and planner outputs


class JudgeUnavailable(GoalSatError):
    pass


class ParseFailure(GoalSatError):
    def __init__(self, message: str, raw: str = ""):
        self.raw = raw
        super().__init__(message)


class SchemaError(GoalSatError):
    pass


class TaskMismatch(GoalSatError):
    pass
