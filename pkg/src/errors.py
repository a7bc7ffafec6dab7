"""Exception types raised across the package.

The CLI maps these onto exit codes (see main.py).
"""


class VGDPError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(VGDPError, ValueError):
    """Invalid or inconsistent configuration."""


class ShapeError(VGDPError, ValueError):
    """Operand shapes do not fit an op's signature."""


class NumericalError(VGDPError, ArithmeticError):
    """NaN/Inf produced or consumed by a numerical routine."""


class GraphError(VGDPError, RuntimeError):
    """Misuse of the autograd graph (e.g. backward with nothing recorded)."""


class SimulationError(VGDPError, RuntimeError):
    """Illegal simulator call, such as stepping a finished episode."""


class DataFormatError(VGDPError, ValueError):
    """A stored episode or checkpoint cannot be decoded."""


class FormatVersionError(DataFormatError):
    """Magic bytes or format version do not match."""


class TruncatedFileError(DataFormatError):
    """File ends before a declared block is complete."""

    def __init__(self, path, offset: int, needed: int, available: int):
        self.path = path
        self.offset = offset
        super().__init__(
            f"{path}: truncated at byte offset {offset} "
            f"(needed {needed} bytes, {available} available)"
        )


class PayloadShapeError(DataFormatError):
    """Header-declared array shapes disagree with the payload size."""


class StoreBusyError(VGDPError, RuntimeError):
    """Dataset store is held by a writer (one writer or many readers, never both)."""
