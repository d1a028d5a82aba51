"""Exception types shared across the toolkit."""

from __future__ import annotations

import numpy as np


class SccaError(Exception):
    """Base class for all toolkit errors."""


class ParseError(SccaError):
    """A delimited input file could not be parsed. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DimensionError(SccaError):
    """Shapes, lengths or normalizations of inputs are inconsistent."""


class StateError(SccaError):
    """An input is in the wrong state for the operation (e.g. not centered)."""


class DegenerateInputError(SccaError):
    """The input carries no usable signal (zero block, zero update)."""


class SingularityError(SccaError):
    """A within-view covariance is singular; a ridge > 0 is required."""


class IndefiniteMatrixError(SccaError):
    """A matrix required to be positive semi-definite has substantial negative spectrum."""


class InsufficientFactorsError(SccaError):
    """The operation needs more fitted factors than the solution carries."""


class IoError(SccaError):
    """An output file could not be written."""


class EmptySupportError(SccaError):
    """Every coordinate of a direction was thresholded out.

    ``side`` names the collapsed direction when known; ``last_iterate`` holds
    the final stage-one iterate so callers (e.g. tuning) can diagnose the cell.
    """

    def __init__(self, message: str, side: str | None = None,
                 last_iterate: np.ndarray | None = None):
        super().__init__(message)
        self.side = side
        self.last_iterate = last_iterate
