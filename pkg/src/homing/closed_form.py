"""Closed-form value functions and optimal controls for the two solvable families.

In both families ``G = F''`` solves a linear first-order ODE whose solution
for a power-law ``h0 * x**e`` is

    G(x) = c / sqrt(h0) * x**(-e/2) + (f0/h0) * x**(1-e) / (2-e)

(with a ``ln x`` form at ``e == 2``).  Integrating twice gives
``F = c*A(x) + B(x) + c1*x + c0`` where the antiderivatives A, B take a
generic form plus special forms at ``e in {2, 3, 4}``.  Case 1 uses
``(e, f0, h0, lam) = (n, f0, h0, lam)``; Case 2 uses ``(m, 1, g0, 0)``.
The ODE forces ``c**2 = lam + f0*c1``, which turns the boundary
conditions into a single quadratic in ``c``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import AdmissibilityError, CaseError, DomainError, InfeasibleError, ShapeError, SolveError
from .model import LOG_BRANCHES, CaseKind, HomingProblem, PowerLaw, classify, validate_problem

DEFAULT_GRID = 1001
FEASIBILITY_TOL = 1e-12


class AmbiguousRootWarning(UserWarning):
    """Both roots of the quadratic for ``c`` keep F'' < 0 on the interval."""


@dataclass(frozen=True)
class Branch:
    """Which antiderivative formula applies for effective exponent ``e``."""

    exponent: int

    @property
    def kind(self) -> str:
        if self.exponent in LOG_BRANCHES:
            return f"LogBranch{self.exponent}"
        return "Generic"

    def __str__(self):
        if self.exponent in LOG_BRANCHES:
            return self.kind
        return f"Generic({self.exponent})"

    @classmethod
    def parse(cls, text: str) -> Branch:
        if text.startswith("LogBranch"):
            return cls(int(text[len("LogBranch"):]))
        if text.startswith("Generic(") and text.endswith(")"):
            return cls(int(text[len("Generic("):-1]))
        raise ValueError(f"unknown branch {text!r}")


def _basis(e: int, f0: float, h0: float, x, order: int):
    """Return ``(a, b)`` with ``d^order F / dx^order = c*a + b (+ c1/c0 terms)``."""
    x = np.asarray(x, dtype=float)
    s = math.sqrt(h0)
    r = f0 / h0
    if e == 2:
        lx = np.log(x)
        if order == 2:
            return 1.0 / (s * x), r * lx / (2.0 * x)
        if order == 1:
            return lx / s, r * lx**2 / 4.0
        return x * (lx - 1.0) / s, r / 4.0 * x * (lx**2 - 2.0 * lx + 2.0)
    if e == 3:
        if order == 2:
            return x**-1.5 / s, -r / x**2
        if order == 1:
            return -2.0 / (s * np.sqrt(x)), r / x
        return -4.0 * np.sqrt(x) / s, r * np.log(x)
    if e == 4:
        if order == 2:
            return 1.0 / (s * x**2), -r / (2.0 * x**3)
        if order == 1:
            return -1.0 / (s * x), r / (4.0 * x**2)
        return -np.log(x) / s, -r / (4.0 * x)
    k = 2.0 - e
    if order == 2:
        return np.power(x, -e / 2.0) / s, r * np.power(x, 1.0 - e) / k
    if order == 1:
        return 2.0 * np.power(x, 1.0 - e / 2.0) / (s * k), r * np.power(x, 2.0 - e) / k**2
    return (
        2.0 * np.power(x, 2.0 - e / 2.0) / (s * k * (2.0 - e / 2.0)),
        r * np.power(x, 3.0 - e) / (k**2 * (3.0 - e)),
    )


def _scalar_or_array(val, x):
    return float(val) if np.ndim(x) == 0 else val


@dataclass(frozen=True)
class ClosedFormSolution:
    """Constants realizing ``F = c*A + B + c1*x + c0`` on ``[d1, d2]``."""

    case: CaseKind
    branch: Branch
    c: float
    c1: float
    c0: float
    effective_f0: float
    effective_h0: float
    effective_lambda: float
    d1: float
    d2: float

    def _check(self, x):
        xa = np.asarray(x, dtype=float)
        if np.any(xa < self.d1) or np.any(xa > self.d2) or np.any(np.isnan(xa)):
            raise DomainError(f"x must lie in [{self.d1}, {self.d2}], got {x!r}")

    def _parts(self, x, order):
        return _basis(self.branch.exponent, self.effective_f0, self.effective_h0, x, order)

    def value(self, x):
        self._check(x)
        a, b = self._parts(x, 0)
        return _scalar_or_array(self.c * a + b + self.c1 * np.asarray(x, dtype=float) + self.c0, x)

    def derivative(self, x):
        self._check(x)
        a, b = self._parts(x, 1)
        return _scalar_or_array(self.c * a + b + self.c1, x)

    def second_derivative(self, x):
        self._check(x)
        a, b = self._parts(x, 2)
        return _scalar_or_array(self.c * a + b, x)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["case"] = self.case.value
        d["branch"] = str(self.branch)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ClosedFormSolution:
        d = dict(d)
        d["case"] = CaseKind(d["case"])
        d["branch"] = Branch.parse(d["branch"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def eval_G(sol: ClosedFormSolution, x):
    return sol.second_derivative(x)


def eval_F(sol: ClosedFormSolution, x):
    return sol.value(x)


def eval_F_prime(sol: ClosedFormSolution, x):
    return sol.derivative(x)


def optimal_control(p: HomingProblem, sol: ClosedFormSolution, x):
    """Optimal feedback ``u*(x) = -v(x) / (2 q(x)) * F''(x)``."""
    g = sol.second_derivative(x)
    return _scalar_or_array(-p.v(x) / (2.0 * p.q(x)) * g, x)


class ValueFunction(Protocol):
    def derivative(self, x): ...

    def second_derivative(self, x): ...


def hjb_residual(p: HomingProblem, F: ValueFunction, x):
    """``lam + f F' - h (F'')**2``; zero for an exact solution of the HJB ODE."""
    return p.lam + p.f(x) * F.derivative(x) - p.h(x) * F.second_derivative(x) ** 2


def _effective(p: HomingProblem, case: CaseKind | str | None):
    tag = classify(p)
    if case is None:
        if tag.kind is CaseKind.NEITHER:
            raise CaseError(f"problem has no closed form ({tag}); use the numeric solver")
        case = CaseKind.CASE1 if tag.has_case1 else CaseKind.CASE2
    case = CaseKind(case)
    if case is CaseKind.CASE1:
        if not tag.has_case1:
            raise CaseError(f"Case 1 needs constant drift and 2j-l in [-2, 4]; problem is {tag}")
        return case, tag.n, p.drift.coefficient, tag.h0, p.lam
    if case is CaseKind.CASE2:
        if not tag.has_case2:
            raise CaseError(f"Case 2 needs lambda = 0 and 2j-l-k in [-4, 4]; problem is {tag}")
        return case, tag.m, 1.0, tag.g0, 0.0
    raise CaseError(f"solve_constants needs case1 or case2, got {case.value}")


def _quadratic_roots(a: float, b: float, c: float) -> list[float] | None:
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return None
    # cancellation-free form
    qq = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    if qq == 0.0:
        return [0.0, 0.0]
    return sorted({qq / a, c / qq})


def _candidates(p: HomingProblem, case, grid_points: int):
    """Yield real roots as (solution, is_admissible); None if no real root."""
    case, e, f0, h0, lam = _effective(p, case)
    d1, d2, K0 = p.d1, p.d2, p.terminal_cost
    a1, b1 = _basis(e, f0, h0, d1, 0)
    a2, b2 = _basis(e, f0, h0, d2, 0)
    width = d2 - d1
    roots = _quadratic_roots(width / f0, float(a2 - a1), float(b2 - b1) - lam * width / f0 - K0)
    if roots is None:
        return None
    grid = np.linspace(d1, d2, grid_points)
    out = []
    for c in roots:
        c1 = (c * c - lam) / f0
        c0 = -(c * float(a1) + float(b1) + c1 * d1) + 0.0
        sol = ClosedFormSolution(case, Branch(e), c, c1, c0, f0, h0, lam, d1, d2)
        out.append((sol, bool(np.all(sol.second_derivative(grid) < 0.0))))
    return out


def _admissible(p: HomingProblem, case, grid_points: int) -> bool:
    cands = _candidates(p, case, grid_points)
    return bool(cands) and any(ok for _, ok in cands)


def minimal_terminal_cost(p: HomingProblem, case=None, grid_points: int = DEFAULT_GRID) -> float | None:
    """Smallest admissible K0 (strict bound) for ``p`` with everything else fixed.

    Uses the exact bound when the problem has one of the two worked-example
    shapes, otherwise bisects on K0 over ``[eps, 1e3 * K0]``.
    """
    try:
        return min_k0_closed(p)
    except ShapeError:
        pass
    lo = 1e-12 * p.terminal_cost
    hi = 1e3 * p.terminal_cost
    if not _admissible(p.replace(terminal_cost=hi), case, grid_points):
        return None
    if _admissible(p.replace(terminal_cost=lo), case, grid_points):
        return lo
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _admissible(p.replace(terminal_cost=mid), case, grid_points):
            hi = mid
        else:
            lo = mid
    return hi


def solve_constants(
    p: HomingProblem,
    case: CaseKind | str | None = None,
    grid_points: int = DEFAULT_GRID,
) -> ClosedFormSolution:
    """Solve for ``(c, c1, c0)`` under the requested case.

    ``case=None`` picks Case 1 when it applies, else Case 2.  Of the real
    roots for ``c`` only those with ``F'' < 0`` on a ``grid_points`` grid
    survive; if both do, the more negative is returned with a warning.
    """
    validate_problem(p)
    cands = _candidates(p, case, grid_points)
    if cands is None:
        raise InfeasibleError(
            f"no real c for K0 = {p.terminal_cost:g}: closed form infeasible",
            minimal_terminal_cost(p, case, grid_points),
        )
    good = [sol for sol, ok in cands if ok]
    if not good:
        k0min = minimal_terminal_cost(p, case, grid_points)
        hint = f"; K0 must exceed {k0min:.9g}" if k0min is not None else ""
        raise AdmissibilityError(
            f"no root keeps F'' < 0 on [{p.d1:g}, {p.d2:g}] for K0 = {p.terminal_cost:g}{hint}",
            k0min,
        )
    if len(good) > 1 and good[0].c != good[1].c:
        warnings.warn(
            f"both roots c = {good[0].c:.9g}, {good[1].c:.9g} keep F'' < 0; taking the smaller",
            AmbiguousRootWarning,
            stacklevel=2,
        )
    sol = min(good, key=lambda s: s.c)

    grid = np.linspace(p.d1, p.d2, grid_points)
    drive = p.lam + p.f(grid) * sol.derivative(grid)
    tol = FEASIBILITY_TOL * max(1.0, abs(p.lam), float(np.max(np.abs(drive))))
    if np.min(drive) < -tol:
        i = int(np.argmin(drive))
        raise AdmissibilityError(f"lambda + f F' = {drive[i]:.3g} < 0 at x = {grid[i]:.6g}", None)
    if np.min(optimal_control(p, sol, grid)) < 0:
        raise AdmissibilityError("optimal control is negative somewhere on the grid", None)
    return sol


def _matches(pl: PowerLaw, coef: float, exp: int) -> bool:
    return pl.exponent == exp and math.isclose(pl.coefficient, coef, rel_tol=1e-12)


def is_wiener_shape(p: HomingProblem) -> bool:
    return _matches(p.drift, 1.0, 0) and _matches(p.variance, 1.0, 0) and _matches(p.cost_weight, 0.5, 0)


def is_gbm_shape(p: HomingProblem) -> bool:
    return (
        _matches(p.drift, 1.0, 1)
        and _matches(p.variance, 1.0, 2)
        and _matches(p.cost_weight, 1.0, 1)
        and p.lam == 0.0
        and p.d1 == 1.0
    )


def min_k0_closed(p: HomingProblem) -> float:
    """Exact strict lower bound on K0 for the two worked-example shapes.

    Unit Wiener (f=1, v=1, q=1/2): ``K0 > w**3/3 - lam*w`` with ``w = d2 - d1``.
    Controlled GBM (f=x, v=x**2, q=x, lam=0, d1=1): ``K0 > 4(d - 1 - ln d - ln(d)**2/2)``.
    """
    if is_wiener_shape(p):
        w = p.d2 - p.d1
        return w**3 / 3.0 - p.lam * w
    if is_gbm_shape(p):
        ld = math.log(p.d2)
        return 4.0 * (p.d2 - 1.0 - ld - 0.5 * ld * ld)
    raise ShapeError("no closed-form K0 bound: problem is neither the unit Wiener nor the GBM shape")


def solution_table(p: HomingProblem, sol: ClosedFormSolution, points: int = DEFAULT_GRID) -> dict[str, np.ndarray]:
    x = np.linspace(sol.d1, sol.d2, points)
    return {
        "x": x,
        "F": sol.value(x),
        "F_prime": sol.derivative(x),
        "G": sol.second_derivative(x),
        "u_star": optimal_control(p, sol, x),
    }


def write_table_csv(path: str | Path, table: dict[str, np.ndarray]) -> None:
    """Write columns with a header row and 15 significant digits."""
    cols = list(table)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in zip(*(table[c] for c in cols)):
            w.writerow([f"{float(v):.15g}" for v in row])


def admissibility_margin(p: HomingProblem, case=None) -> float | None:
    """``K0 - K0_min``; positive means the terminal cost clears the bound."""
    k0min = minimal_terminal_cost(p, case)
    return None if k0min is None else p.terminal_cost - k0min


__all__ = [
    "AmbiguousRootWarning",
    "Branch",
    "ClosedFormSolution",
    "SolveError",
    "admissibility_margin",
    "eval_F",
    "eval_F_prime",
    "eval_G",
    "hjb_residual",
    "min_k0_closed",
    "minimal_terminal_cost",
    "optimal_control",
    "solution_table",
    "solve_constants",
    "write_table_csv",
]
