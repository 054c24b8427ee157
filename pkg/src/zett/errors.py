"""Exception hierarchy shared across the package.

ZettError is the base; DataError-ish conditions (bad inputs, bad files)
and NumericError-ish conditions (solver failures) are distinguished so
the CLI can map them to exit codes 2 and 3.
"""


class ZettError(Exception):
    pass


class DataError(ZettError):
    """Bad input data: files, corpora, ids, shapes."""


class NumericError(ZettError):
    """Numerical failure: divergence, iteration limits."""


class Unsegmentable(DataError):
    """No decomposition of the pretoken exists under the vocabulary."""


class InputTooLong(DataError):
    pass


class IdOutOfRange(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class DimensionMismatch(ShapeMismatch):
    pass


class SequenceTooLong(DataError):
    pass


class TokenOutsideSubset(DataError):
    pass


class InsufficientSubstrings(DataError):
    pass


class EmptyOverlap(DataError):
    pass


class NotScalar(DataError):
    pass


class StaleTape(ZettError):
    """backward() called twice on the same recorded graph."""


class IterationLimit(NumericError):
    pass


class Unbounded(NumericError):
    pass
