from typing import Optional


class CvTestError(Exception):
    """Base class for every error raised by the test pipeline."""


class DataError(CvTestError, ValueError):
    """Malformed or insufficient input data."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(CvTestError):
    """A fit or statistic could not be evaluated on the given data."""


class DegenerateNeighborhood(NumericalError):
    """No kernel mass around an evaluation point; the bandwidth is too small."""


class AllBandwidthsDegenerate(NumericalError):
    """No candidate bandwidth admits a leave-one-out fit at every observation."""


class ZeroDenominator(NumericalError):
    """The weighted squared variance estimates sum to zero."""


class ZeroResidualSpread(NumericalError):
    """All standardized residuals are equal."""


class ExplosiveSeries(CvTestError):
    """A simulated series left the overflow guard."""


class ReplicateFailure(CvTestError):
    """A bootstrap replicate kept failing after all redraws."""


class CellFailure(CvTestError):
    """Too many Monte Carlo runs of a cell aborted."""


class AsymptoticRegimeWarning(UserWarning):
    """Bandwidths fall outside the regime g = o(h^2)."""
