"""Exception types shared across the package."""


class SparseInvError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SparseInvError, ValueError):
    pass


class SingularOperator(SparseInvError, ValueError):
    pass


class UnsupportedSize(SparseInvError, ValueError):
    pass


class RankDeficientModel(SparseInvError, ValueError):
    pass


class SpaceTooLarge(SparseInvError, ValueError):
    pass


class IndexOutOfRange(SparseInvError, IndexError):
    pass


class AtomNotFound(SparseInvError, KeyError):
    pass


class ZeroTruth(SparseInvError, ValueError):
    pass


class NoConvergence(SparseInvError, RuntimeError):
    """Raised only on request; solvers normally flag non-convergence instead."""
