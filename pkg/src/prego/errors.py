"""Exception hierarchy shared by all prego modules.

Every error raised on purpose derives from PregoError so callers (notably
the CLI) can map failures to exit codes without enumerating modules.
"""


class PregoError(Exception):
    """Base class for all prego errors."""


# --- vocabulary / alphabet -------------------------------------------------

class DuplicateName(PregoError):
    pass


class EmptyName(PregoError):
    pass


class InvalidName(PregoError):
    """Action name contains a forbidden character (newline or comma)."""


class PoolExhausted(PregoError):
    """Random-symbol pool is smaller than the vocabulary."""


class UnknownAction(PregoError):
    pass


class UnknownSymbol(PregoError):
    """A symbol outside the alphabet, e.g. an LLM emission we cannot decode."""


class UnencodableAction(PregoError):
    pass


# --- ingestion -------------------------------------------------------------

class ParseError(PregoError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class NonContiguousSteps(PregoError):
    pass


class UnknownMistakeType(PregoError):
    pass


class OutOfOrderFrames(PregoError):
    pass


# --- anticipation ----------------------------------------------------------

class IdOutOfRange(PregoError):
    pass


class EmptyContext(PregoError):
    pass


class TransportError(PregoError):
    """LLM endpoint unreachable or persistently failing past the retry budget."""


class BudgetExceeded(PregoError):
    """The global token budget would be exceeded by the next request."""


# --- benchmark -------------------------------------------------------------

class NoCorrectProcedures(PregoError):
    pass


class AlignmentMismatch(PregoError):
    pass


class CyclicGrammar(PregoError):
    pass


class NoValidInjection(PregoError):
    pass
