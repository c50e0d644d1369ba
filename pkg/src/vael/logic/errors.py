"""Exceptions raised by the logic dialect and its inference engine."""


class LogicError(Exception):
    """Base class for all logic-module errors."""


class ParseError(LogicError):
    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class CyclicProgramError(LogicError):
    """The predicate dependency graph contains a cycle; only non-recursive programs are supported."""


class UnboundVariableError(LogicError):
    """A head or constraint variable is not bound by a positive body atom or an `is` evaluation."""


class GroundingError(LogicError):
    """Grounding failed: undeclared predicate, non-integer arithmetic, or unusable domain."""


class WorldCapExceededError(LogicError):
    """The number of possible worlds exceeds the configured enumeration cap."""


class UnknownPredicateError(LogicError):
    """A query or evidence formula refers to a predicate the program does not declare."""


class InconsistentEvidenceError(LogicError):
    """Evidence has zero probability: no possible world entails it."""


class NonGroundFormulaError(LogicError):
    """Entailment was asked about a formula that still contains variables."""
