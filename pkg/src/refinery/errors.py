"""Exception hierarchy shared across the package."""

from __future__ import annotations


class RefineryError(Exception):
    """Base class for all errors raised by this package."""


# --- query parsing / rewriting ---

class QuerySyntaxError(RefineryError):
    """SQL text could not be parsed as a single SELECT statement."""


class NoRefinablePredicates(RefineryError):
    """The query contains zero predicates of refinable form."""


class ArityMismatch(RefineryError):
    """An assignment or subspace has the wrong number of entries."""


class KindMismatch(RefineryError):
    """Numeric value supplied for a categorical predicate or vice versa."""


# --- catalog ---

class SchemaError(RefineryError):
    """Source file rows disagree with the header column count."""


class TypeInferenceError(RefineryError):
    """A column's values could not be assigned a consistent type."""


class ExecError(RefineryError):
    """Query execution failed; carries the engine message and SQL."""

    def __init__(self, message: str, sql: str | None = None):
        super().__init__(message if sql is None else f"{message}\nSQL: {sql}")
        self.sql = sql


class UnknownTable(RefineryError):
    """Query references a table absent from the catalog."""


class UnknownColumn(RefineryError):
    """Reference to a column absent from the relevant table or result set."""


# --- subspaces ---

class ProbeFailure(RefineryError):
    """Derived-attribute min/max probe could not be constructed."""


class EmptyRange(RefineryError):
    """A predicate range admits no values (e.g. empty interval intersection)."""


class UnknownSubspace(RefineryError):
    """Subspace was never registered in the history store."""


# --- objectives ---

class EvalError(RefineryError):
    """Deviation expression hit a guarded division with no default."""


class MissingResults(RefineryError):
    """Outcome-based distance requested without both result sets."""


class DegenerateDenominator(RefineryError):
    """Optimality undefined because max distance equals the optimum."""


# --- proposal strategies / wire ---

class WireError(RefineryError):
    """Transport or HTTP failure talking to the model endpoint."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ProposalParseError(RefineryError):
    """Model output did not conform to the proposal document schema."""


class StrategyExhausted(RefineryError):
    """Strategy and its fallback both failed to produce a proposal."""


# --- engine / instances ---

class InstanceError(RefineryError):
    """Instance file invalid, dataset failed to load, or query unusable."""
