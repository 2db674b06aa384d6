"""Exception types raised by the flat-flow engine."""


class FlatFlowError(Exception):
    """Base class for all engine errors."""


class EmptySet(FlatFlowError):
    """The set has no inside cells where the operation needs some."""


class FullSet(FlatFlowError):
    """Every cell of the grid is inside; the outside distance is undefined."""


class DegenerateSet(FlatFlowError):
    """A reference set is empty or full, so its boundary distance is undefined."""


class SolverDiverged(FlatFlowError):
    """The primal-dual gap did not reach the requested tolerance."""

    def __init__(self, message, gap=None, iterations=None):
        super().__init__(message)
        self.gap = gap
        self.iterations = iterations


class DomainContact(FlatFlowError):
    """The evolving set reached the outer margin of the computational grid."""


class DegenerateContour(FlatFlowError):
    """A contour is too short or collinear for a curvature estimate."""


class OpenContour(FlatFlowError):
    """A closed curve was required."""


class MismatchedGrids(FlatFlowError):
    """Two inputs live on different grids or use different time steps."""


class NotInvariant(FlatFlowError):
    """The reference set is not invariant under Bonnesen symmetrization."""


class NotCentered(FlatFlowError):
    """The set does not fit inside the polar lattice centred at the origin."""


class IntersectionDetected(FlatFlowError):
    """Tracked curves touched each other or themselves.

    ``state`` holds the last valid curve system, when available.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class StepTooLarge(FlatFlowError):
    """The tracker time step violates the spacing-based step restriction."""
