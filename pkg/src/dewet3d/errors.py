"""Exception hierarchy.

Every error raised by the package derives from :class:`Dewet3DError`; the CLI
maps the intermediate categories to process exit codes.
"""


class Dewet3DError(Exception):
    """Base class for all package errors."""

    exit_code = 1


# -- mesh -----------------------------------------------------------------


class MeshError(Dewet3DError):
    exit_code = 3


class DegenerateTriangle(MeshError):
    pass


class NonManifoldEdge(MeshError):
    pass


class OrientationError(MeshError):
    pass


class ContactLineOffSubstrate(MeshError):
    pass


class OpenBoundaryChain(MeshError):
    pass


class InvalidDimension(MeshError, ValueError):
    pass


class IsolatedVertex(MeshError):
    pass


class NotABoundarySegment(MeshError):
    pass


class SizeMismatch(Dewet3DError, ValueError):
    exit_code = 3


# -- anisotropy -----------------------------------------------------------


class AnisotropyError(Dewet3DError):
    exit_code = 4


class NotSPD(AnisotropyError, ValueError):
    pass


class NotOrthogonal(AnisotropyError, ValueError):
    pass


class ZeroVector(AnisotropyError, ValueError):
    pass


class CuspSingularity(AnisotropyError):
    pass


class DegenerateTangentSpace(AnisotropyError):
    pass


# -- linear algebra -------------------------------------------------------


class SolverError(Dewet3DError):
    exit_code = 5


class SolverDivergence(SolverError):
    pass


class SingularMatrix(SolverError):
    pass


# -- time stepping --------------------------------------------------------


class SchemeError(Dewet3DError):
    exit_code = 6


class AssemblyFailure(SchemeError):
    pass


class MeshInverted(SchemeError):
    pass


# -- diagnostics ----------------------------------------------------------


class DiagnosticsError(Dewet3DError):
    exit_code = 6


class ZeroInitialVolume(DiagnosticsError):
    pass


class NoBoundary(DiagnosticsError):
    pass


# -- configuration and files ----------------------------------------------


class ConfigError(Dewet3DError):
    exit_code = 2


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(ConfigError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class IoError(Dewet3DError, OSError):
    exit_code = 7
