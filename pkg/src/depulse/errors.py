"""Exception types raised by depulse."""

import numpy as np


class DepulseError(Exception):
    """Base class for all depulse errors."""


class FormatError(DepulseError, ValueError):
    """Unsupported audio file layout (channels, sample width, encoding)."""


class TruncatedFileError(DepulseError, OSError):
    """The audio file ends before the advertised number of frames."""


class BoundsError(DepulseError, IndexError):
    pass


class DimensionError(DepulseError, ValueError):
    pass


class PartitionError(DepulseError, ValueError):
    pass


class ConfigError(DepulseError, ValueError):
    pass


class SpecError(DepulseError, ValueError):
    """Invalid pulse injection specification."""


class ContextError(DepulseError, ValueError):
    """Not enough clean signal before a pulse to fit the AR model."""


class DegenerateSignalError(DepulseError, ValueError):
    pass


class DegenerateFitError(DepulseError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NoPulseEvidenceError(DepulseError):
    """The detector found no high-frequency excess to normalize against."""


class NumericError(DepulseError, np.linalg.LinAlgError):
    pass


class SamplerError(NumericError):
    """A numeric failure inside the Gibbs loop, tagged with the iteration."""

    def __init__(self, message, iteration):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
