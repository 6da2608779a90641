"""Exception types shared across the package."""


class DingoError(Exception):
    """Base class for all errors raised by this package."""


class RegexSyntaxError(DingoError, ValueError):
    """Malformed regular expression."""


class UnsupportedFeatureError(DingoError, ValueError):
    """Pattern uses a construct outside the supported dialect."""


class FormatError(DingoError, ValueError):
    """Corrupt or truncated serialized payload."""


class VersionMismatchError(FormatError):
    """Serialized payload was written by an incompatible format version."""


class VocabularyMismatchError(FormatError):
    """Serialized automaton was built against a different vocabulary."""


class InvalidTokenError(DingoError, ValueError):
    """Token id outside the vocabulary."""


class DimensionMismatchError(DingoError, ValueError):
    """Probability rows do not match the vocabulary size."""


class InvalidOrderError(DingoError, ValueError):
    """Commit order is not a permutation of the block positions."""


class TooLargeError(DingoError, ValueError):
    """Instance exceeds the exhaustive-enumeration guard."""


class DeadPrefixError(DingoError, ValueError):
    """Committed token sequence drives the automaton into the dead sink."""


class BlockSourceError(DingoError, RuntimeError):
    """Block-distribution callback failed."""
