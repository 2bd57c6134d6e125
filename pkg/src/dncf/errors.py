"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration/usage problems exit 1,
data/file problems exit 2, numeric failures exit 3.
"""


class DncfError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DncfError):
    """Invalid model spec, run configuration or flag combination."""


class ShapeError(DncfError):
    """Operands with incompatible shapes or widths."""


class DataError(DncfError):
    """Malformed or inconsistent dataset / checkpoint content."""


class FusionError(DncfError):
    """Pre-trained checkpoint tensors incompatible with the fused model."""


class NumericError(DncfError):
    """Non-finite values encountered during optimization."""


class ProtocolError(DncfError):
    """Evaluation invoked in a way that violates the ranking protocol."""
