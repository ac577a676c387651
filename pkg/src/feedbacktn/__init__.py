"""Tensor-network simulation of driven quantum optical nodes coupled to
waveguides with long time-delayed coherent feedback.

The non-Markovian feedback problem is mapped onto Markovian one-dimensional
cascaded chains of replica systems; chain propagators are represented as
matrix-product superoperators evolved by TEBD, contracted with shifted
periodic boundary conditions for reduced states and multi-time correlators.
Infinite-chain (iTEBD) machinery provides steady states, relaxation times,
and steady-state output-field observables; a semi-analytical mean-field
solver covers the strongly driven, long-delay regime.
"""

__version__ = "0.1.0"

from .errors import (
    AccuracyError,
    ConfigError,
    ConvergenceError,
    FeedbackTNError,
    ParameterError,
    ResourceGuardError,
)
from .model import (
    NetworkSpec,
    NodeSpec,
    SimParams,
    make_two_level_node,
    single_node_network,
    validate_network,
)

__all__ = [
    "AccuracyError",
    "ConfigError",
    "ConvergenceError",
    "FeedbackTNError",
    "NetworkSpec",
    "NodeSpec",
    "ParameterError",
    "ResourceGuardError",
    "SimParams",
    "__version__",
    "make_two_level_node",
    "single_node_network",
    "validate_network",
]
