"""Exception types shared across the package."""

from __future__ import annotations


class RelplanError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(RelplanError):
    """Syntax or validation error in a domain/instance text, with location."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)


class ContractViolation(RelplanError):
    """An operation was called outside its stated contract."""


class VocabularyError(RelplanError):
    """A relational structure mentions a relation unknown to the model."""


class BudgetExceeded(RelplanError):
    """A search ran out of its expansion budget (distinct from 'no plan')."""


class FormatError(RelplanError):
    """A dataset or checkpoint file does not match its declared format."""


class DomainMismatch(RelplanError):
    """A closed-form value function was applied to a task it does not cover."""


class DeadEnd(RelplanError):
    """Greedy execution reached a state with no applicable actions."""
