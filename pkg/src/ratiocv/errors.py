"""Exception hierarchy.

Every error raised by the package derives from :class:`RatioCVError`, which is
itself a :class:`ValueError` so callers that only care about bad input can
catch the builtin.
"""


class RatioCVError(ValueError):
    """Base class for all package errors."""


class NotPositiveDefinite(RatioCVError):
    """Cholesky hit a non-positive pivot.

    ``minor`` is the 1-based order of the first leading principal minor that
    failed and ``pivot`` the offending pivot value.
    """

    def __init__(self, minor, pivot, message=None):
        self.minor = minor
        self.pivot = pivot
        super().__init__(
            message
            or f"matrix is not positive definite: leading minor of order {minor} "
            f"has pivot {pivot:.6g}"
        )


class DegenerateDenominator(RatioCVError):
    """E[C] (or its estimate) is zero, so the ratio does not exist."""


class InsufficientSamples(RatioCVError):
    pass


class ZeroVariance(RatioCVError):
    pass


class ZeroRatio(RatioCVError):
    pass


class CollinearControls(RatioCVError):
    """|Corr(B, D)| is 1 to working precision; use the linear-controls form."""


class ZeroSlope(RatioCVError):
    pass


class EmptySample(RatioCVError):
    pass


class LengthMismatch(RatioCVError):
    pass


class ZeroDenominator(RatioCVError):
    """The assembled denominator estimate is exactly zero."""


class MissingKnownMeans(RatioCVError):
    pass


class MissingExtraSamples(RatioCVError):
    pass


class ZeroBaseVariance(RatioCVError):
    pass


class AllReplicationsFailed(RatioCVError):
    pass


class InconsistentClosedForm(RatioCVError):
    """Two algebraically equal variance expressions disagreed numerically."""


class MissingColumn(RatioCVError):
    pass


class ParseFailure(RatioCVError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"cannot parse {value!r} as a real number at row {row}, column {column!r}")


class NonFiniteValue(RatioCVError):
    def __init__(self, row, column):
        self.row = row
        self.column = column
        super().__init__(f"non-finite value at row {row}, column {column!r}")


class InsufficientRows(RatioCVError):
    pass


class InfeasibleSearch(RatioCVError):
    """No positive definite member could be drawn for the initial population."""
