"""Block-wise multiple testing for large correlated datasets."""
from .errors import DomainError, LoadError, PartitionError, SingularCovarianceError
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "DomainError", "LoadError", "PartitionError", "SingularCovarianceError",
           "__version__"]
