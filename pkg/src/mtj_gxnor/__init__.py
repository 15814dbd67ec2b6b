"""Behavioral simulator for MTJ stochastic synapses trained with GXNOR updates."""

from .gxnor import (
    BINARY,
    TERNARY,
    ActivationWindow,
    ProjectionResult,
    QuantSpace,
    activate,
    activate_grad,
    bound_update,
    project,
    quantize_space,
)
from .rng import RngStreams

__version__ = "0.1.0"
