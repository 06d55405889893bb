"""Exception types shared across the engine."""


class DbasmError(Exception):
    """Base class for all engine errors."""


class SignatureError(DbasmError):
    """Unknown function name, arity mismatch, or duplicate declaration."""


class SortError(DbasmError):
    """A term or formula violates the sort discipline."""


class ParseError(DbasmError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class InconsistentUpdateSet(DbasmError):
    """Attempted to apply an update set with conflicting updates."""


class UndefinedAggregate(DbasmError):
    """MIN/MAX/AVG applied to an empty multiset of values."""


class UnboundVariable(DbasmError):
    """Evaluation reached a variable with no binding."""


class UnboundedQuantifier(DbasmError):
    """A second-order quantifier has no finite enumeration under the
    active policy."""


class UnsupportedConstruct(DbasmError):
    """The lowering pass met a construct outside its target fragment."""


class Stuck(DbasmError):
    """A machine run reached a non-final state with no successor."""


class NonTerminating(DbasmError):
    """A machine run exceeded its step bound."""


class GenerationExhausted(DbasmError):
    """The random instance generator could not satisfy its constraints."""
