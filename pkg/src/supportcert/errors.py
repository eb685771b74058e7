"""Exception hierarchy shared across the package."""


class SupportCertError(Exception):
    """Base class for every error raised by this package."""


class SingularMatrixError(SupportCertError):
    pass


class InfeasibleError(SupportCertError):
    """An optimization problem has no feasible point."""


class UnboundedError(SupportCertError):
    pass


class NotIdentifiableError(SupportCertError):
    """x0 is not a Basis Pursuit solution: the certificate set is empty."""


class NotInjectiveError(SupportCertError):
    """The restricted injectivity condition fails.

    ``condition`` names the failed test (``"size"``, ``"rank"`` ...).
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class MuDegenerateError(SupportCertError):
    """The low-noise constant c1 collapses to zero."""


class TauOutOfRangeError(SupportCertError):
    pass


class NoiseRegimeViolatedError(SupportCertError):
    """(w, tau) lies outside the small-noise regime.

    ``violated`` lists the failed inequalities, a subset of
    ``{"noise", "tau"}``.
    """

    def __init__(self, message, violated=()):
        super().__init__(message)
        self.violated = tuple(violated)


class TooLargeError(SupportCertError):
    """A combinatorial check was asked to enumerate too many subsets."""
