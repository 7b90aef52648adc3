"""Monte Carlo and control-theoretic tools for transition densities of degenerate diffusions."""

from .core import (
    Family, MonteCarloConfig, ProcessSpec, SpacePoint, SpecError, TransitionQuery, drift_value, psi,
    support_contains, transport_constant,
)

__version__ = "0.1.0"

__all__ = [
    "Family", "MonteCarloConfig", "ProcessSpec", "SpacePoint", "SpecError", "TransitionQuery",
    "drift_value", "psi", "support_contains", "transport_constant",
]
