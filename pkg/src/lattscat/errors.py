"""Exception types shared across the package.

Every failure mode that callers are expected to branch on gets its own
class; generic ValueError is reserved for plain misuse of an API.
"""


class LattScatError(Exception):
    """Base class for all package errors."""


class SingularEnergy(LattScatError):
    """Energy lies in the singular set where the outward normal degenerates."""


class OutOfBand(LattScatError):
    """Energy lies outside the spectral band [-2d, 2d]."""


class NonConvexRegime(LattScatError):
    """Energy is admissible but the level set is not strictly convex."""


class BandEdge(LattScatError):
    """Argument of the half-line kernel sits on the edge of its band."""


class NoConvergence(LattScatError):
    """Iterative solver failed to reach its tolerance."""


class QuadratureNotConverged(LattScatError):
    """Quadrature refinement check failed at the requested tolerance."""


class ExtrapolationUnstable(LattScatError):
    """Regularization ladder did not settle; the limit is not trusted."""


class SingularSystem(LattScatError):
    """Linear system for the scattered wave is singular or near-singular."""


class ZeroOffset(LattScatError):
    """Detector offset must be a nonzero lattice vector."""


class ZeroPoint(LattScatError):
    """Measurement point must be a nonzero lattice point."""


class InsideSupport(LattScatError):
    """Measurement point landed inside the scatterer support."""


class NearSingularD(LattScatError):
    """Recovery determinant is below the rejection threshold."""


class DegenerateSeparation(LattScatError):
    """Measurement separations violate the nondegeneracy condition."""


class ConfigError(LattScatError):
    """Experiment configuration is malformed or has unknown keys."""
