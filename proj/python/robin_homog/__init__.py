"""Periodic homogenization of Robin problems through reflected diffusions and backward regression."""

from ._robin_homog import (
    Ensemble,
    ExperimentConfig,
    NumericalError,
    PreconditionError,
    averaging,
    cell,
    convergence,
    format_number,
    load_config,
    parse_config,
    simulate,
    solve_bsde,
    solve_radial,
)

__all__ = [
    "Ensemble",
    "ExperimentConfig",
    "NumericalError",
    "PreconditionError",
    "averaging",
    "cell",
    "convergence",
    "format_number",
    "load_config",
    "parse_config",
    "simulate",
    "solve_bsde",
    "solve_radial",
]
