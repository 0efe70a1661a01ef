"""Fractional elliptic problems with measure data on the unit ball."""

from __future__ import annotations

from .errors import (AssemblyError, BallEscapeError, DivergingSequenceError, FracGreenError, GridMismatchError,
                     InconsistencyError, KernelSingularityError, NoRootError, NonConvergenceError, SchemaError,
                     ValidationError, WrongOperatorError)
from .model import (FracParams, Grid, GridField, GrowthSpec, MeasureExtension, ProblemSpec, RadonMeasure, Solution,
                    SolverConfig, critical_exponent, normalization_constant, validate_problem)
from .operator import apply_operator, apply_truncated, assemble_operator, getoor_constant
from .green import build_green, green_apply, green_kernel_ball, nonlocal_normal_derivative, poisson_apply
from .solver import lambda_star, picard_solve, prepare, solve_full
from .boundary import fractional_normal_test, lift_measure, solve_concentrated
from .analysis import (TestBattery, comparison_experiment, critical_sweep, stability_experiment, w1q_norm,
                       weak_residual)
from .io import parse_spec

__all__ = [name for name in dir() if not name.startswith("_")]
