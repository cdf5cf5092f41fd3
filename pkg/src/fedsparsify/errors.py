"""Exception types shared across the package."""


class FedSparsifyError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(FedSparsifyError):
    """Invalid configuration, dimensions, or hyperparameters (CLI exit code 2)."""


class DataFormatError(FedSparsifyError):
    """Malformed on-disk data such as IDX or dataset files (CLI exit code 3)."""
