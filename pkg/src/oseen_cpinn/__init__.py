"""Consistent and pressure-robust PINN solvers for the stationary Oseen equations."""

import jax

# tolerances down to 1e-12 are only meaningful in double precision
jax.config.update("jax_enable_x64", True)

from .problem import (  # noqa: E402
    ExactSolution,
    OseenCase,
    OseenCoefficients,
    helmholtz_parts,
    make_case,
    make_example1,
    make_example2,
    synthesize_forcing,
)
from .sampling import CollocationSet, dyadic_grid, tensor_grid  # noqa: E402

__all__ = [
    "CollocationSet",
    "ExactSolution",
    "OseenCase",
    "OseenCoefficients",
    "dyadic_grid",
    "helmholtz_parts",
    "make_case",
    "make_example1",
    "make_example2",
    "synthesize_forcing",
    "tensor_grid",
]

__version__ = "0.1.0"
