"""Optimal control of one-dimensional diffusions until first exit from an interval.

Closed-form value functions for power-law coefficients, a shooting solver
for the general HJB boundary-value problem, and a Monte Carlo policy
evaluator.
"""

from .closed_form import (
    AmbiguousRootWarning,
    Branch,
    ClosedFormSolution,
    admissibility_margin,
    eval_F,
    eval_F_prime,
    eval_G,
    hjb_residual,
    min_k0_closed,
    minimal_terminal_cost,
    optimal_control,
    solve_constants,
)
from .errors import (
    AdmissibilityError,
    BracketError,
    CaseError,
    CensoringError,
    DomainError,
    HomingError,
    InfeasibleError,
    NumericalError,
    ShapeError,
    ShotInvalid,
    SolveError,
)
from .hjb_numeric import NumericValueFunction, extract_policy, shoot, solve_bvp
from .model import CaseKind, CaseTag, HomingProblem, PowerLaw, classify, eval_coefficient, validate_problem
from .policy import (
    ClosedFormOptimalPolicy,
    ConstantPolicy,
    Policy,
    ScaledPolicy,
    TabulatedPolicy,
    ZeroPolicy,
    eval_policy,
)
from .simulate import ExitSide, McEstimate, PathOutcome, SimulationConfig, estimate_cost, simulate_outcomes, simulate_path

__all__ = [name for name in dir() if not name.startswith("_")]
