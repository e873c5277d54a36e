"""Exception hierarchy shared across the package."""


class PsgError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PsgError, ValueError):
    """Malformed, non-finite or mis-shaped input data."""


class InvalidParameterError(PsgError, ValueError):
    """A parameter is outside its admissible range."""


class EmptySignalError(PsgError, ValueError):
    """A signal or record has no usable samples."""


class StratificationError(PsgError, ValueError):
    pass


class UndefinedMetricError(PsgError, ValueError):
    pass


class InvalidCheckpointError(PsgError, ValueError):
    pass


class NumericError(PsgError, FloatingPointError):
    """Non-finite values appeared inside a layer."""

    def __init__(self, layer, message="non-finite values"):
        self.layer = layer
        super().__init__(f"{layer}: {message}")


class TrainingError(PsgError, RuntimeError):
    def __init__(self, step, message="loss became non-finite"):
        self.step = step
        super().__init__(f"training diverged at step {step}: {message}")


class ConfigError(PsgError, ValueError):
    """Bad run configuration or inconsistent inputs."""


class FormatError(PsgError, ValueError):
    """A persisted file could not be parsed."""
