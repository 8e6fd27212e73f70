"""Numerical laboratory for adaptive dyne detection of single-rail qubits.

The package simulates homodyne, heterodyne and delayed adaptive dyne
measurements of a single-photon wave packet, evaluates the approximate figure
of merit ``F~ = (9 - <|R|^4>) / 8`` by quadrature and in closed form, and
optimizes constant and two-level feedback gains against it.
"""

from .analytic import (
    AnalyticMerit,
    ClosedFormOutOfRange,
    Method,
    QuadratureConfig,
    ToleranceNotMet,
    closed_form_available,
    merit_closed_form_constant,
    merit_quadrature_delay,
    merit_quadrature_zero_delay,
)
from .feedback import (
    AdaptiveIntegral,
    ConstantGain,
    Heterodyne,
    Homodyne,
    OptimalGain,
    PiecewiseGain,
    gain_value,
    parse_lo,
    parse_strategy,
    phase_variance,
)
from .merit import approx_merit_from_m4, heterodyne_exact, homodyne_exact, qubit_metrics, table1
from .modeshape import ModeShape, ShapeKind, characteristic_width, cumulative, density, normalized, parse_shape
from .optimizer import Family, OptimizationResult, delay_sweep, optimize_constant_gain, optimize_piecewise_gain
from .trajectory import (
    SimulationConfig,
    estimate_merit,
    simulate_outcomes,
    simulate_protocol,
    simulate_trajectory,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticMerit",
    "ClosedFormOutOfRange",
    "Method",
    "QuadratureConfig",
    "ToleranceNotMet",
    "closed_form_available",
    "merit_closed_form_constant",
    "merit_quadrature_delay",
    "merit_quadrature_zero_delay",
    "AdaptiveIntegral",
    "ConstantGain",
    "Heterodyne",
    "Homodyne",
    "OptimalGain",
    "PiecewiseGain",
    "gain_value",
    "parse_lo",
    "parse_strategy",
    "phase_variance",
    "approx_merit_from_m4",
    "heterodyne_exact",
    "homodyne_exact",
    "qubit_metrics",
    "table1",
    "ModeShape",
    "ShapeKind",
    "characteristic_width",
    "cumulative",
    "density",
    "normalized",
    "parse_shape",
    "Family",
    "OptimizationResult",
    "delay_sweep",
    "optimize_constant_gain",
    "optimize_piecewise_gain",
    "SimulationConfig",
    "estimate_merit",
    "simulate_outcomes",
    "simulate_protocol",
    "simulate_trajectory",
]
