"""Exception taxonomy shared by all modules.

The CLI maps these onto exit codes: validation/input problems exit with 2,
file format and I/O problems with 3, numerical failures with 4.
"""


class TiStackError(Exception):
    """Base class for all package errors."""


class ValidationError(TiStackError):
    """Invalid parameters, configs, or domain-constraint violations."""


class InputError(ValidationError):
    """Inputs that are structurally fine but unusable (empty mask, ...)."""


class GridMismatchError(ValidationError):
    """Two volumes do not live on the same voxel grid."""


class UnmappedLabelError(ValidationError):
    """A label volume contains a code the unification map does not cover."""


class FormatError(TiStackError):
    """A file does not parse as the format it claims to be."""


class UnsupportedError(FormatError):
    """Valid file, but uses a feature outside the supported subset."""


class NumericalError(TiStackError):
    """A numerical procedure failed (no bracket, rank-deficient system)."""
