"""Exception hierarchy shared across the package.

Everything raised on a bad input derives from :class:`SkillexError` so the
command-line layer can map "your data is broken" to a single exit code while
genuine bugs still surface as ordinary tracebacks.
"""


class SkillexError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(SkillexError):
    """Malformed CoNLL text; the message carries a 1-based line number."""


class FormatError(SkillexError):
    """Corrupt or mistyped binary container: bad magic, version, or length."""


class DataError(SkillexError):
    """Values that violate a contract: NaN payloads, bad row sums, zero vectors."""


class AlignmentError(SkillexError):
    """Token/row counts or vector widths that do not line up."""


class ParameterError(SkillexError):
    """Out-of-range, empty, or otherwise unusable algorithm parameters."""


class StateError(SkillexError):
    """Operation needs state the object does not have (an index, entries)."""
