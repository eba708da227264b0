"""Exception taxonomy shared across the toolchain.

Every failure the package raises deliberately derives from WavebenchError so
callers (and the CLI exit-code mapping) can distinguish our diagnostics from
genuine bugs.
"""


class WavebenchError(Exception):
    """Base class for all errors raised by wavebench."""


class ParameterError(WavebenchError, ValueError):
    """A parameter value is outside its documented domain."""


class InputError(WavebenchError, ValueError):
    """Input data is unusable (empty sequence, wrong rank, non-finite)."""


class ShapeError(WavebenchError, ValueError):
    """Array shapes are inconsistent with each other or with the contract."""


class StepSizeError(WavebenchError):
    """An explicit solver step exceeds its stability bound."""


class StabilityError(WavebenchError):
    """A simulation left its physical regime (blow-up, loss of positivity)."""


class CalibrationError(WavebenchError):
    """A calibration search failed to bracket or converge on its target."""


class OptimizationError(WavebenchError):
    """An iterative optimizer diverged; carries the loss trace when known."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class NumericalError(WavebenchError):
    """A numeric result failed an internal sanity check."""


class DataIOError(WavebenchError):
    """A required file is missing or unreadable."""


class FormatError(WavebenchError, ValueError):
    """A file exists but cannot be decoded as the expected format."""


class IntegrityError(WavebenchError):
    """Stored data does not match its recorded checksum or byte length."""


class ConfigError(WavebenchError, ValueError):
    """A run configuration failed schema validation."""


class AggregationError(WavebenchError, ValueError):
    """Benchmark rows cannot be aggregated (duplicates, empty input)."""
