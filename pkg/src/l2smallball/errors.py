"""Exception hierarchy shared by all modules."""


class SmallBallError(Exception):
    """Base class; the CLI maps any subclass to a nonzero exit code."""


class ParameterError(SmallBallError, ValueError):
    pass


class ResolutionError(SmallBallError, ValueError):
    """A grid or discretization is too coarse for the requested quantity."""


class KernelError(SmallBallError):
    """Kernel fails symmetry or positive semi-definiteness checks."""


class NotApplicableError(SmallBallError):
    pass


class NotAvailableError(SmallBallError):
    pass


class RootIsolationError(SmallBallError):
    pass


class SingularityError(SmallBallError):
    pass


class RangeError(SmallBallError, OverflowError):
    pass


class DivergenceError(SmallBallError):
    pass


class PrecisionError(SmallBallError):
    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved
