"""Language-anchored relative alignment for domain-incremental learning."""

from .autodiff import (ConfigurationError, ContractViolation, NumericFailure,
                       Tape, Var, cosine_similarity, fd_gradient,
                       kl_divergence, softmax_temp)

__all__ = [
    "ConfigurationError",
    "ContractViolation",
    "NumericFailure",
    "Tape",
    "Var",
    "cosine_similarity",
    "fd_gradient",
    "kl_divergence",
    "softmax_temp",
]

__version__ = "0.1.0"
