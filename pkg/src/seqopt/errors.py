"""Exception taxonomy shared across the package."""


class SeqoptError(Exception):
    """Base class for all errors raised by seqopt."""


class ConfigError(SeqoptError):
    """A knob, dimension, or config field is outside its allowed range."""


class InputError(SeqoptError):
    """Caller-supplied data (tokens, vectors) violates a precondition."""


class DomainError(SeqoptError):
    """An operation was applied to a degenerate input (e.g. no feasible action)."""


class NumericError(SeqoptError):
    """A non-finite value appeared where finite arithmetic is required."""


class InternalError(SeqoptError):
    """Inconsistent internal state, e.g. a stale activation cache."""


class EnvError(SeqoptError):
    """A reward oracle failed: child process, protocol, or evaluation error."""
