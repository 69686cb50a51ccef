"""Exception types raised across the package."""


class VoterlabError(Exception):
    """Base class for all package errors."""


class BipartiteOrReducible(VoterlabError):
    """Interaction matrix is reducible or periodic."""


class SelfLoopViolation(VoterlabError):
    """A self-loop requirement on the graph is not met."""


class NonConvergence(VoterlabError):
    """An iterative routine hit its cap before reaching tolerance."""

    def __init__(self, message, residual=None, diagnostics=None):
        super().__init__(message)
        self.residual = residual
        self.diagnostics = diagnostics or {}


class TooLargeForExact(VoterlabError):
    """Exact enumeration requested beyond the supported size."""


class CapExceeded(VoterlabError):
    """A trajectory ran past its step cap without reaching consensus.

    The partial trajectory is kept on ``self.trajectory``.
    """

    def __init__(self, cap, trajectory=None):
        super().__init__(f"no consensus within {cap} steps")
        self.cap = cap
        self.trajectory = trajectory


class DomainError(VoterlabError, ValueError):
    """Argument outside the domain of a formula."""


class SingularSystem(VoterlabError):
    """A linear system that should be nonsingular is not."""


class InsufficientData(VoterlabError):
    """Too few cycles for a Monte Carlo estimate."""


class UnsupportedMu(VoterlabError):
    """The initial distribution is not supported by a closed form."""
