"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map error
classes onto distinct process exit statuses.
"""


class QsdChaosError(Exception):
    exit_code = 1


class ConfigError(QsdChaosError, ValueError):
    exit_code = 2


class RangeError(QsdChaosError, IndexError):
    exit_code = 2


class InstabilityError(QsdChaosError, ArithmeticError):
    """Integration produced a non-finite or collapsed state."""

    exit_code = 3

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


class TruncationError(QsdChaosError):
    """Fock-basis tail population exceeded its bound."""

    exit_code = 4

    def __init__(self, message, time=None, tail=None):
        super().__init__(message)
        self.time = time
        self.tail = tail


class AnalysisError(QsdChaosError):
    """Input is degenerate for the requested analysis."""

    exit_code = 5


class LengthError(AnalysisError, ValueError):
    pass


class DegenerateSeriesError(AnalysisError, ValueError):
    pass


class InsufficientNeighborsError(AnalysisError):
    pass


class PanelError(AnalysisError):
    pass


class SegmentationError(AnalysisError, ValueError):
    pass


class BandError(AnalysisError, ValueError):
    pass


class InsufficientDurationError(AnalysisError, ValueError):
    pass


class InsufficientPointsError(AnalysisError, ValueError):
    pass


class ReportError(AnalysisError):
    """A sweep directory has nothing to report on."""
