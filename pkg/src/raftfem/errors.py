"""Exception hierarchy shared by all raftfem modules."""


class RaftFEMError(Exception):
    """Base class for every error raised by raftfem."""


class GeometryError(RaftFEMError):
    """Degenerate or inconsistent mesh geometry."""


class MeshBoundsError(GeometryError, ValueError):
    """Requested refinement level outside the supported range."""


class UsageError(RaftFEMError, ValueError):
    """A field or argument does not match the object it is used with."""


class ModelError(RaftFEMError):
    """A model ingredient (e.g. the double-well potential) violates a required property."""


class SolverError(RaftFEMError):
    """An iterative solver failed to reach its tolerance.

    The best iterate and its residual norm are kept so callers can decide
    whether to retry or accept.
    """

    def __init__(self, message, x=None, residual=None, iterations=None):
        super().__init__(message)
        self.x = x
        self.residual = residual
        self.iterations = iterations


class PreconditionerError(RaftFEMError):
    """Incomplete factorisation broke down (zero pivot)."""


class CompatibilityError(RaftFEMError):
    """Right-hand side of a singular problem is not in the range of the operator."""


class StagnationError(RaftFEMError):
    """Secant iteration cannot proceed because consecutive masses coincide."""


class ConfigError(RaftFEMError, ValueError):
    """Invalid configuration file or value.

    ``field`` names the offending key; ``line``/``column`` locate parse errors.
    """

    def __init__(self, message, field=None, line=None, column=None):
        where = ""
        if line is not None:
            where = f" (line {line}, column {column or 1})"
        super().__init__(message + where)
        self.field = field
        self.line = line
        self.column = column
