"""Exception types raised across the toolkit."""


class GpcvError(Exception):
    """Base class for all gpcv errors."""


class InputError(GpcvError, ValueError):
    """Invalid argument values or shapes."""


class ParseError(InputError):
    """Malformed dataset or partition file; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class StateError(GpcvError, ValueError):
    """Inconsistent model state, e.g. non-positive site variances."""


class NegativeCavityError(StateError):
    """A cavity variance came out non-positive; caller decides how to react."""


class NumericalError(GpcvError, RuntimeError):
    """A matrix factorization or solve failed."""


class EpFitError(GpcvError, RuntimeError):
    """Expectation-propagation fit could not produce a usable state."""


class CriterionUndefinedError(GpcvError, ValueError):
    """Requested criterion is undefined for this label configuration."""


class StratificationError(InputError):
    """A class is too small to stratify."""
