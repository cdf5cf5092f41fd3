"""Deterministic federated-learning simulator with progressive magnitude
pruning of the shared model, plus pruning and no-pruning baselines and
per-round accuracy / sparsity / transmission-cost reporting."""

__version__ = "0.1.0"

from .errors import ConfigurationError, DataFormatError, FedSparsifyError

__all__ = ["ConfigurationError", "DataFormatError", "FedSparsifyError", "__version__"]
