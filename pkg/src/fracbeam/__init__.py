"""Timoshenko beam with a fractional boundary damper: spectrum, decay,
gap structure, observability and HUM boundary control."""

from .model import SystemParams, classify_speeds, check_condition_A1, resonance_class
from .fractional import build_diffusive_grid, diffusive_integral
from .spectrum import char_determinant, conservative_spectrum, find_eigenvalues
from .simulator import assemble, evolve, fit_decay_exponent
from .observability import (
    assemble_moment_system,
    boundary_output,
    classify_ratio,
    gap_report,
    ingham_threshold,
    observability_constants,
)
from .control import SpaceSpec, hum_control, solve_moment_problem, synthesize_control, verify_null_control, weighted_norm

__version__ = "0.1.0"

__all__ = [
    "SystemParams",
    "classify_speeds",
    "check_condition_A1",
    "resonance_class",
    "build_diffusive_grid",
    "diffusive_integral",
    "char_determinant",
    "conservative_spectrum",
    "find_eigenvalues",
    "assemble",
    "evolve",
    "fit_decay_exponent",
    "assemble_moment_system",
    "boundary_output",
    "classify_ratio",
    "gap_report",
    "ingham_threshold",
    "observability_constants",
    "SpaceSpec",
    "hum_control",
    "solve_moment_problem",
    "synthesize_control",
    "verify_null_control",
    "weighted_norm",
]
