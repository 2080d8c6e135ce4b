"""Exception hierarchy shared across the package.

Every error raised by lbbp derives from :class:`LbbpError` so callers can
catch the whole family; the CLI maps them onto exit code 1.
"""


class LbbpError(Exception):
    """Base class for all lbbp errors."""


class ParseError(LbbpError):
    """A mesh or auxiliary file could not be parsed."""


class TopologyError(LbbpError):
    """Mesh connectivity violates the manifoldness requirements."""


class DisconnectedMesh(LbbpError):
    """An operation requiring a connected mesh met an unreachable vertex."""


class InvalidLevelSpec(LbbpError):
    """Sample-hierarchy level sizes are inconsistent."""


class InvalidK(LbbpError):
    """Requested eigenpair count is out of range."""


class ConvergenceFailure(LbbpError):
    """An iterative solver exhausted its iteration budget."""


class LinearSolveFailure(LbbpError):
    """A sparse linear solve produced non-finite values or failed."""


class DuplicateLandmark(LbbpError):
    """The same landmark vertex was given twice."""


class IndexOutOfRange(LbbpError):
    """A vertex index does not address any vertex of the mesh."""


class EmptyFeatureSet(LbbpError):
    """A feature construction was asked to produce zero columns."""


class IllConditionedGram(LbbpError):
    """The diffusion-basis Gram matrix is numerically singular."""


class DimensionMismatch(LbbpError):
    """Operands have incompatible shapes."""


class LineSearchFailure(LbbpError):
    """A line search could not find an acceptable step."""


class NonpositiveConformalFactor(LbbpError):
    """The conformal factor lost positivity."""


class MaxIterationsExceeded(LbbpError):
    """Outer loop hit its iteration cap (reported, usually not raised)."""
