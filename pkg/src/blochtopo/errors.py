"""Error taxonomy.

Physics failures (a gapless family, a topological obstruction) are kept apart
from usage errors so batch drivers and the CLI can tell "the model is in a
phase where the request makes no sense" from "the request was malformed".
"""


class BlochtopoError(Exception):
    """Base class for all package errors."""


class PhysicsError(BlochtopoError):
    """The computation is well-posed but the physics refuses.

    CLI maps these to exit code 2.
    """


class DegenerateLatticeError(BlochtopoError):
    """Lattice basis is singular or near-singular."""


class GridParityError(BlochtopoError):
    """Momentum grid sizes must be even and at least 4."""


class HermiticityError(BlochtopoError):
    """Hopping data violates H(-R) = H(R)^dagger."""


class UnknownModelError(BlochtopoError):
    """Builtin model name or parameter set not recognized."""


class AmbiguousSelectionError(BlochtopoError):
    """Band selection boundary falls inside a degenerate cluster."""


class ContourCollisionError(BlochtopoError):
    """Resolvent contour passes too close to the spectrum."""


class GaplessError(PhysicsError):
    """Selected bands are not uniformly separated from the rest."""


class ObstructionError(PhysicsError):
    """A topological obstruction forbids the requested construction."""


class RefinementError(BlochtopoError):
    """Discretization too coarse for a reliable answer; refine the grid."""


class ProjectorDistanceError(BlochtopoError):
    """Two projectors are unitarily too far apart (operator norm >= 1)."""


class SymmetryError(BlochtopoError):
    """Declared symmetry data is inconsistent."""


class EvenRankError(SymmetryError):
    """Fermionic time reversal needs an even number of selected bands."""


class FrameConstructionError(BlochtopoError):
    """No usable frame found (trial subspaces all nearly rank-deficient)."""
