"""Exception hierarchy shared across the package.

Every failure mode that callers are expected to branch on gets its own
class; generic ValueError/TypeError are reserved for plain programming
errors.
"""


class ConefoldError(Exception):
    """Base class for all package-specific errors."""


class InvalidDimension(ConefoldError):
    """A dimension constraint was violated (e.g. a subspace as large as
    its ambient space, or an unsupported (codim, stable-dim) pair)."""


class DimensionMismatch(ConefoldError):
    """Two objects live in incompatible ambient spaces."""


class RankDeficient(ConefoldError):
    """A frame had numerical rank below its column count."""


class NoConvergence(ConefoldError):
    """An iteration (Newton inversion, bundle pullback, detector) failed
    to reach its tolerance within the step budget."""


class OutOfDomain(ConefoldError):
    """A point left the domain it was required to stay in (model cube,
    trapping box, invertibility range)."""


class LeftDomain(ConefoldError):
    """A detector iterate escaped the fold's model domain or the
    trapping region."""


class SingularSystem(ConefoldError):
    """The fold tangency system had |det A| below tolerance."""


class NotAGraph(ConefoldError):
    """A plane is not a graph over the relevant cone center."""


class NotElliptic(ConefoldError):
    """The sweep detector was asked to run on a fold kind it does not
    support."""


class EmptyIntersection(ConefoldError):
    """No leaf in the sweep interval intersects the fold patch."""


class NoSuchAutomorphism(ConefoldError):
    """No integer matrix with the requested spectrum was found within
    the search budget."""


class ReconstructionFailed(ConefoldError):
    """A solved fold point failed its residual verification (the input
    plane was outside the certified cone)."""
