from __future__ import annotations

from typing import Sequence


class SlogError(Exception):
    """Base class for every error the engine reports to a caller."""

    exit_code = 1


class ProgramError(SlogError):
    exit_code = 4


class SlogSyntaxError(ProgramError):
    exit_code = 3

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class ArityError(ProgramError):
    pass


class UnsafeHeadVariable(ProgramError):
    def __init__(self, variable: str, message: str | None = None) -> None:
        super().__init__(message or f"variable '{variable}' is not bound by a positive body clause")
        self.variable = variable


class IllFormedIdUnification(ProgramError):
    def __init__(self, variable: str, message: str | None = None) -> None:
        super().__init__(
            message
            or f"head id '{variable}' is unified with another position of the rule"
        )
        self.variable = variable


class NestedNegation(ProgramError):
    pass


class UnstratifiableNegation(ProgramError):
    exit_code = 5

    def __init__(self, cycle: Sequence[str]) -> None:
        self.cycle = tuple(cycle)
        super().__init__("negation inside a recursive cycle: " + " -> ".join(self.cycle))


class EvaluationError(SlogError):
    exit_code = 6


class IterationLimitExceeded(EvaluationError):
    def __init__(self, limit: int, stratum: int) -> None:
        super().__init__(f"stratum {stratum} did not converge within {limit} supersteps")
        self.limit = limit
        self.stratum = stratum


class HeightLimitExceeded(EvaluationError):
    def __init__(self, limit: int, fact: str) -> None:
        super().__init__(f"fact {fact} exceeds the height limit of {limit}")
        self.limit = limit
        self.fact = fact


class IngestError(SlogError):
    exit_code = 7


class FactLookupError(SlogError, LookupError):
    exit_code = 8


class OracleMismatch(SlogError):
    exit_code = 9


class CapacityError(SlogError):
    exit_code = 11


INCONCLUSIVE_EXIT_CODE = 10

EXIT_CODES = {
    "ok": 0,
    "usage": 2,
    "syntax": SlogSyntaxError.exit_code,
    "validate": ProgramError.exit_code,
    "stratify": UnstratifiableNegation.exit_code,
    "guard": EvaluationError.exit_code,
    "ingest": IngestError.exit_code,
    "not_found": FactLookupError.exit_code,
    "oracle_diff": OracleMismatch.exit_code,
    "inconclusive": INCONCLUSIVE_EXIT_CODE,
    "capacity": CapacityError.exit_code,
}
