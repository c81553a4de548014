"""Exception hierarchy shared by all modules.

The CLI maps these onto process exit codes (see ``vmbsim.app.cli``).
"""


class VMBError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(VMBError):
    """Invalid configuration: bad extents, CFL violation, unresolvable scale."""


class DomainError(VMBError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DataError(VMBError, ValueError):
    """Array data is malformed (NaN, negative density, wrong shape)."""


class DegenerateCellError(VMBError):
    """A spatial cell has no mass or a nonpositive fitted temperature."""


class ProjectionError(VMBError):
    """The Gram matrix of the collision invariants is singular on this grid."""


class StudyError(VMBError):
    """A refinement study was requested with too few or inconsistent levels."""


class RunAbort(VMBError):
    """A time integration was aborted (tally blowup, collision step limit)."""
