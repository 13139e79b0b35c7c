"""krflow: pseudo-spectral torus potential-flow integrator with monitors."""

from .errors import (
    ConeViolationError,
    ConfigError,
    FlowAbortError,
    GeometryDegenerateError,
    HorizonExceededError,
    HypothesisViolationError,
    IllConditionedMetricError,
    KrflowError,
    PositivityLostError,
    UnsupportedConfigurationError,
)
from .grid import (
    HermitianMatrixField,
    PeriodicGrid,
    ScalarField,
    read_snapshot,
    write_snapshot,
)
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "ConeViolationError",
    "ConfigError",
    "FlowAbortError",
    "GeometryDegenerateError",
    "HorizonExceededError",
    "HypothesisViolationError",
    "IllConditionedMetricError",
    "KrflowError",
    "PositivityLostError",
    "UnsupportedConfigurationError",
    "HermitianMatrixField",
    "PeriodicGrid",
    "ScalarField",
    "read_snapshot",
    "write_snapshot",
    "KERNEL_BACKEND",
    "__version__",
]
