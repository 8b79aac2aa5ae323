"""Exception hierarchy shared by the solvers, the simulator and the CLI."""

from __future__ import annotations


class HomingError(Exception):
    """Base class for every error raised by this package."""


class DomainError(HomingError, ValueError):
    """An input lies outside the domain where a quantity is defined."""


class CaseError(HomingError, ValueError):
    """The requested closed-form case does not apply to the problem."""


class ShapeError(HomingError, ValueError):
    """The problem does not match a shape with a known closed-form K0 bound."""


class SolveError(HomingError):
    """No admissible closed-form solution exists for this terminal cost.

    ``min_terminal_cost`` is the smallest admissible K0 for the same
    problem (strict lower bound), or ``None`` when it could not be located.
    """

    def __init__(self, message: str, min_terminal_cost: float | None = None):
        super().__init__(message)
        self.min_terminal_cost = min_terminal_cost


class InfeasibleError(SolveError):
    """The quadratic for the constant ``c`` has no real root."""


class AdmissibilityError(SolveError):
    """Real roots exist, but none keeps F'' < 0 on the whole interval."""


class ShotInvalid(HomingError, ArithmeticError):
    """A shooting trajectory left the domain of the square root.

    ``x`` is the grid point where ``lambda + f(x) F'(x)`` first went negative.
    """

    def __init__(self, message: str, x: float):
        super().__init__(message)
        self.x = x


class BracketError(HomingError, ArithmeticError):
    """Shooting could not bracket or converge on the terminal condition."""

    def __init__(self, message: str, best_terminal: float | None = None):
        super().__init__(message)
        self.best_terminal = best_terminal


class NumericalError(HomingError, ArithmeticError):
    """A simulated state became non-finite."""


class CensoringError(HomingError):
    """Too many simulated paths hit the time horizon without exiting."""

    def __init__(self, message: str, estimate=None):
        super().__init__(message)
        self.estimate = estimate
