"""Exception hierarchy shared by all solvers."""


class TapError(Exception):
    """Base class for every error raised by this package."""


class InvalidInstanceError(TapError, ValueError):
    """Malformed instance data (bad tree, bad costs, unknown nodes)."""


class InfeasibleError(TapError):
    """Some tree edge that must be covered has no covering link."""


class CapExceededError(TapError):
    """A desk-scale guard (DP width, branch count) was exceeded."""


class MissingShadowLink(TapError):
    """An up-vector needed a shadow link that the instance does not carry."""


class LpInfeasibleError(InfeasibleError):
    pass


class LpUnboundedError(TapError):
    pass


class BoundViolation(TapError, AssertionError):
    """A proven performance bound failed on a concrete run."""


class NoSubtreeFound(TapError):
    """No admissible semi-closed subtree exists in the current tree."""


class CertificateFailure(TapError):
    """The dual-fitting construction could not keep its invariants."""

    def __init__(self, clause, detail=""):
        super().__init__(f"{clause}: {detail}" if detail else clause)
        self.clause = clause
        self.detail = detail
