"""Shooting solver for the nonlinear HJB boundary-value problem.

With ``F'' < 0`` the ODE ``0 = lam + f F' - h F''**2`` is solved for the
second derivative, ``F'' = -sqrt((lam + f F') / h)``, and integrated as a
first-order system in ``(F, F')`` from ``F(d1) = 0``, ``F'(d1) = s`` with
classical fixed-step RK4.  Bisection on ``s`` then matches ``F(d2) = K0``.
Works for any power-law problem with ``f > 0`` and ``h > 0`` on the interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .closed_form import write_table_csv
from .errors import BracketError, DomainError, ShotInvalid
from .model import HomingProblem, validate_problem
from .policy import TabulatedPolicy

DEFAULT_STEPS = 10_000
MIN_STEPS = 100
MAX_DOUBLINGS = 60
MAX_BISECTIONS = 200


@dataclass(frozen=True, eq=False)
class NumericValueFunction:
    """Value function on a uniform grid from ``d1`` to ``d2``.

    ``F_double_prime_values`` comes from the ODE right-hand side evaluated
    on the integrated ``(x, F')``, not from differencing.
    """

    grid: np.ndarray
    F_values: np.ndarray
    F_prime_values: np.ndarray
    F_double_prime_values: np.ndarray
    shoot_parameter: float
    residual_sup: float

    def value(self, x):
        return np.interp(x, self.grid, self.F_values)

    def derivative(self, x):
        return np.interp(x, self.grid, self.F_prime_values)

    def second_derivative(self, x):
        return np.interp(x, self.grid, self.F_double_prime_values)


@dataclass(frozen=True, eq=False)
class Shot:
    terminal: float
    grid: np.ndarray | None = None
    F: np.ndarray | None = None
    F_prime: np.ndarray | None = None
    F_double_prime: np.ndarray | None = None


def _coefficient_tables(p: HomingProblem, n_steps: int):
    x = np.linspace(p.d1, p.d2, n_steps + 1)
    mid = x[:-1] + 0.5 * (x[1:] - x[:-1])
    f_nodes, f_mid = p.f(x), p.f(mid)
    h_nodes, h_mid = p.h(x), p.h(mid)
    for arr, what in ((f_nodes, "f"), (f_mid, "f"), (h_nodes, "h = v^2/(8q)"), (h_mid, "h = v^2/(8q)")):
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise DomainError(f"shooting needs finite {what} > 0 on [{p.d1}, {p.d2}]")
    return x, f_nodes, f_mid, 1.0 / h_nodes, 1.0 / h_mid


def shoot(p: HomingProblem, s: float, n_steps: int = DEFAULT_STEPS, *, record: bool = True, _tables=None) -> Shot:
    """Integrate from ``F(d1) = 0, F'(d1) = s`` and return ``F(d2)``.

    Raises ShotInvalid at the first grid point where ``lam + f F'`` < 0.
    Intermediate RK stages clamp that quantity at zero.
    """
    if n_steps < MIN_STEPS:
        raise ValueError(f"n_steps must be >= {MIN_STEPS}, got {n_steps}")
    x, fn, fm, ihn, ihm = _tables if _tables is not None else _coefficient_tables(p, n_steps)
    fn_l, fm_l, ihn_l, ihm_l = fn.tolist(), fm.tolist(), ihn.tolist(), ihm.tolist()
    lam = p.lam
    dx = (p.d2 - p.d1) / n_steps
    half = 0.5 * dx
    sixth = dx / 6.0
    sqrt = math.sqrt

    F, P = 0.0, float(s)
    if record:
        Fs = [0.0] * (n_steps + 1)
        Ps = [0.0] * (n_steps + 1)
        Gs = [0.0] * (n_steps + 1)
    for i in range(n_steps):
        a = lam + fn_l[i] * P
        if a < 0.0:
            raise ShotInvalid(f"lambda + f F' = {a:.3g} < 0 at x = {x[i]:.6g}", float(x[i]))
        k1 = -sqrt(a * ihn_l[i])
        if record:
            Fs[i], Ps[i], Gs[i] = F, P, k1
        P2 = P + half * k1
        a = lam + fm_l[i] * P2
        k2 = -sqrt(a * ihm_l[i]) if a > 0.0 else 0.0
        P3 = P + half * k2
        a = lam + fm_l[i] * P3
        k3 = -sqrt(a * ihm_l[i]) if a > 0.0 else 0.0
        P4 = P + dx * k3
        a = lam + fn_l[i + 1] * P4
        k4 = -sqrt(a * ihn_l[i + 1]) if a > 0.0 else 0.0
        F += sixth * (P + 2.0 * P2 + 2.0 * P3 + P4)
        P += sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    a = lam + fn_l[n_steps] * P
    if a < 0.0:
        raise ShotInvalid(f"lambda + f F' = {a:.3g} < 0 at x = {x[-1]:.6g}", float(x[-1]))
    if not record:
        return Shot(F)
    Fs[n_steps], Ps[n_steps], Gs[n_steps] = F, P, -sqrt(a * ihn_l[n_steps])
    return Shot(F, x, np.array(Fs), np.array(Ps), np.array(Gs))


def residual_sup(p: HomingProblem, grid: np.ndarray, F: np.ndarray) -> float:
    """Sup over interior nodes of ``|lam + f F' - h F''**2|`` with F', F'' by finite differences."""
    hl = grid[1:-1] - grid[:-2]
    hr = grid[2:] - grid[1:-1]
    dl = (F[1:-1] - F[:-2]) / hl
    dr = (F[2:] - F[1:-1]) / hr
    # three-point stencils, second order on smooth non-uniform grids
    Fp = (hl * dr + hr * dl) / (hl + hr)
    Fpp = 2.0 * (dr - dl) / (hl + hr)
    x = grid[1:-1]
    res = p.lam + p.f(x) * Fp - p.h(x) * Fpp**2
    return float(np.max(np.abs(res)))


def solve_bvp(p: HomingProblem, n_steps: int = DEFAULT_STEPS, tol: float = 1e-8) -> NumericValueFunction:
    """Find ``s = F'(d1)`` with ``|F(d2) - K0| <= tol`` by bracketing and bisection.

    Invalid shots count as ``F(d2) = -inf`` (the slope was too small).  The
    shooting map is assumed nondecreasing in ``s`` over valid shots; an
    observed violation raises BracketError instead of silently converging
    to garbage.  ``s = 0`` with ``lam = 0`` is valid (``F' = 0`` is a fixed
    point) even though small positive slopes are not.
    """
    validate_problem(p)
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    K0 = p.terminal_cost
    tables = _coefficient_tables(p, n_steps)
    n_valid = 0

    def terminal(s: float) -> float:
        nonlocal n_valid
        try:
            t = shoot(p, s, n_steps, record=False, _tables=tables).terminal
        except ShotInvalid:
            return -math.inf
        n_valid += 1
        return t

    lo, t_lo = 0.0, terminal(0.0)
    hi, t_hi = 1.0, terminal(1.0)
    best = max(t_lo, t_hi)
    doublings = 0
    while t_hi < K0:
        if -math.inf < t_hi < t_lo:
            raise BracketError(f"shooting map decreased between s={lo:g} and s={hi:g}", best)
        if doublings == MAX_DOUBLINGS:
            if n_valid == 0:
                raise ShotInvalid(f"every slope up to s={hi:g} leaves the square-root domain", p.d1)
            raise BracketError(f"F(d2) never reached K0 = {K0:g}; largest value {best:.6g} at s = {hi:g}", best)
        lo, t_lo = hi, t_hi
        hi *= 2.0
        t_hi = terminal(hi)
        best = max(best, t_hi)
        doublings += 1

    s_best, err_best = hi, abs(t_hi - K0)
    if t_lo > -math.inf and abs(t_lo - K0) < err_best:
        s_best, err_best = lo, abs(t_lo - K0)
    for _ in range(MAX_BISECTIONS):
        if err_best <= tol:
            break
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        t_mid = terminal(mid)
        if t_mid > t_hi or -math.inf < t_mid < t_lo:
            raise BracketError(f"shooting map not monotone near s = {mid:.12g}", best)
        if abs(t_mid - K0) < err_best:
            s_best, err_best = mid, abs(t_mid - K0)
        if t_mid < K0:
            lo, t_lo = mid, t_mid
        else:
            hi, t_hi = mid, t_mid
    if err_best > tol:
        raise BracketError(f"bisection stalled at |F(d2) - K0| = {err_best:.3g} > tol = {tol:g}", best)

    shot = shoot(p, s_best, n_steps, _tables=tables)
    return NumericValueFunction(
        grid=shot.grid,
        F_values=shot.F,
        F_prime_values=shot.F_prime,
        F_double_prime_values=shot.F_double_prime,
        shoot_parameter=s_best,
        residual_sup=residual_sup(p, shot.grid, shot.F),
    )


def extract_policy(nvf: NumericValueFunction, p: HomingProblem) -> TabulatedPolicy:
    """Tabulate ``u* = -v/(2q) F''`` on the solver grid."""
    u = -p.v(nvf.grid) / (2.0 * p.q(nvf.grid)) * nvf.F_double_prime_values
    return TabulatedPolicy(nvf.grid, np.maximum(u, 0.0))


def numeric_table(nvf: NumericValueFunction, p: HomingProblem) -> dict[str, np.ndarray]:
    return {
        "x": nvf.grid,
        "F": nvf.F_values,
        "F_prime": nvf.F_prime_values,
        "F_double_prime": nvf.F_double_prime_values,
        "u_star": extract_policy(nvf, p).values,
    }


def write_numeric_csv(path, nvf: NumericValueFunction, p: HomingProblem) -> None:
    write_table_csv(path, numeric_table(nvf, p))
