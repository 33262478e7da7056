"""Pseudospectral Klein-Gordon-Schroedinger simulations on the periodic torus,
low/high frequency data splitting and scaling probes."""

__version__ = "0.1.0"

from .spectral import (  # noqa: E402
    ComplexField,
    Grid,
    GridMismatchError,
    InvalidFieldError,
    ParameterError,
    RealField,
    sobolev_norm,
)
from .model import (  # noqa: E402
    ConservedQuantities,
    FirstOrderState,
    SecondOrderState,
    energy,
    to_first_order,
    to_second_order,
)
from .evolution import NumericalAbort, StepControl, strang_step  # noqa: E402

__all__ = [
    "ComplexField", "Grid", "GridMismatchError", "InvalidFieldError", "ParameterError",
    "RealField", "sobolev_norm", "ConservedQuantities", "FirstOrderState", "SecondOrderState",
    "energy", "to_first_order", "to_second_order", "NumericalAbort", "StepControl", "strang_step",
]
