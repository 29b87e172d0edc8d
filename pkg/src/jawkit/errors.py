"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line frontend:
1 for I/O and configuration problems, 2 for numerical or convergence
failures, 3 for data-contract violations.
"""


class JawkitError(Exception):
    exit_code = 2


# -- I/O and configuration ---------------------------------------------------

class ConfigError(JawkitError):
    exit_code = 1


class ParseError(JawkitError):
    exit_code = 1

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFormatError(JawkitError):
    exit_code = 1


# -- numerical ----------------------------------------------------------------

class ThetaNearPiError(JawkitError):
    """Coupled SE(3) log requested for a rotation angle too close to pi."""


class DegenerateGeometryError(JawkitError):
    pass


class NoCorrespondencesError(JawkitError):
    def __init__(self, message, stage=None):
        if stage is not None:
            message = f"stage {stage}: {message}"
        super().__init__(message)
        self.stage = stage


class NoConvergenceError(JawkitError):
    """Iteration budget exhausted. ``last`` holds the final iterate."""

    def __init__(self, message, last=None, residual=None):
        super().__init__(message)
        self.last = last
        self.residual = residual


class EmptyInputError(JawkitError):
    pass


class SingularCovarianceError(JawkitError):
    pass


class NonPSDCovarianceError(JawkitError):
    pass


class ResolutionTooCoarseError(JawkitError):
    exit_code = 1


class EmptyMapError(JawkitError):
    pass


# -- transform tree -----------------------------------------------------------

class UnknownFrameError(JawkitError):
    exit_code = 3


class DuplicateEdgeError(JawkitError):
    exit_code = 3


class SpanningCycleError(JawkitError):
    exit_code = 3


class DisconnectedFramesError(JawkitError):
    exit_code = 3


class MissingEdgeError(JawkitError):
    exit_code = 2


class VertexSetMismatchError(JawkitError):
    exit_code = 3


# -- warnings -----------------------------------------------------------------

class InconsistentOrientationWarning(UserWarning):
    pass


class RankDeficientWarning(UserWarning):
    pass
