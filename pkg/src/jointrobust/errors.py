"""Exception types raised across the package."""


class JointRobustError(Exception):
    """Base class for all package errors."""


class SchemaError(JointRobustError, ValueError):
    """A required column is missing from an input file."""


class ParseError(JointRobustError, ValueError):
    """A cell could not be parsed; ``row`` is the 1-based data row index."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class SizeError(JointRobustError, ValueError):
    """Input has too few rows or mismatched lengths."""


class RankError(JointRobustError, ArithmeticError):
    """Normal equations stayed singular after the ridge fallback."""


class ClassError(JointRobustError, ValueError):
    """Logistic fit requested on labels containing a single class."""


class DegenerateResampleError(JointRobustError, RuntimeError):
    """Bootstrap kept drawing single-class resamples."""


class IndeterminacyError(JointRobustError, ArithmeticError):
    """Robust loss has no unique minimizer without an anchor penalty."""
