"""Lagrangian mechanics and Lie point symmetries on finite time scales."""
from .dynamics import (AccelerationField, Lagrangian, Trajectory, acceleration,
                       dubois_residual, el_residual, nonsingularity, solve_bvp, solve_ivp)
from .errors import (ConvergenceError, DomainExhaustedError, EvaluationError, ExprSyntaxError,
                     InputError, NumericError, ProblemFormatError, SingularError, ToolkitError,
                     UnknownIdentifierError)
from .expr import differentiate, evaluate, parse, serialize
from .report import ResidualReport
from .symmetry import (GaugeFunction, GeneratorPair, conservation_residual, conserved_series,
                       determining_residual, equivalence_gap, noether_residual,
                       search_generators, solve_gauge, structure_residual)
from .timescale import TimeScale, build_explicit, build_geometric, build_uniform

__version__ = "0.1.0"
