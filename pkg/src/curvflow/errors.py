"""Exception types shared across the package."""


class CurvflowError(Exception):
    """Base class for all curvflow errors."""


class ParseError(CurvflowError):
    """A mesh file is malformed for its declared format."""


class TopologyError(CurvflowError):
    """Mesh connectivity violates manifoldness, orientation, or validity rules."""


class EmptyMeshError(CurvflowError):
    """Mesh has no vertices or no faces."""


class SpecError(CurvflowError):
    """A shape specification carries out-of-range or inconsistent parameters."""


class DegenerateTriangleError(CurvflowError):
    """A triangle's area fell below the degeneracy threshold.

    Raised by matrix assembly; the flow engine converts it into a
    ``singular`` status rather than letting it escape.
    """

    def __init__(self, message, triangle=None):
        super().__init__(message)
        self.triangle = triangle


class DimensionMismatchError(CurvflowError):
    """Array shapes do not agree with the operator or mesh they are used with."""


class NotPositiveDefiniteError(CurvflowError):
    """Factorization hit a non-positive pivot.

    This is a signal, not a crash: the flow engine interprets it as
    singularity formation. ``pivot_index`` is the vertex index of the
    offending pivot when it could be identified.
    """

    def __init__(self, message, pivot_index=None):
        super().__init__(message)
        self.pivot_index = pivot_index


class MaxIterationsError(CurvflowError):
    """Iterative solver exhausted its iteration budget before converging."""


class OutOfHorizonError(CurvflowError):
    """An analytic radius was requested at or past its validity horizon."""


class BreakdownError(CurvflowError):
    """Conjugate gradients met a direction of non-positive curvature.

    Like :class:`NotPositiveDefiniteError`, this doubles as the
    singularity signal when it occurs inside a flow step.
    """


class ConnectivityMismatchError(CurvflowError):
    """Two meshes expected to share connectivity do not."""


class SchemaError(CurvflowError):
    """A metrics CSV does not conform to the expected schema."""
