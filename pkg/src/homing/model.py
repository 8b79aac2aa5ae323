"""Problem data model: power-law coefficients, the homing problem, case tags.

The controlled process is ``dX = f(X) dt + sqrt(v(X) |u|) dW`` on ``[d1, d2]``
with running cost ``q(X) u^2 / 2 + lambda`` and terminal cost 0 at ``d1``,
``K0`` at ``d2``.  ``f``, ``v`` and ``q`` are power laws ``a * x**k``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .errors import DomainError

CASE1_RANGE = range(-2, 5)
CASE2_RANGE = range(-4, 5)
LOG_BRANCHES = (2, 3, 4)


@dataclass(frozen=True)
class PowerLaw:
    """``coefficient * x**exponent`` with a positive coefficient."""

    coefficient: float
    exponent: int = 0

    def __post_init__(self):
        coef = float(self.coefficient)
        if not (math.isfinite(coef) and coef > 0):
            raise DomainError(f"power-law coefficient must be finite and > 0, got {self.coefficient!r}")
        exp = self.exponent
        if isinstance(exp, float) and exp.is_integer():
            exp = int(exp)
        if isinstance(exp, bool) or not isinstance(exp, (int, np.integer)):
            raise DomainError(f"power-law exponent must be an integer, got {self.exponent!r}")
        object.__setattr__(self, "coefficient", coef)
        object.__setattr__(self, "exponent", int(exp))

    def __call__(self, x):
        return eval_coefficient(self, x)

    def to_dict(self) -> dict[str, Any]:
        return {"coefficient": self.coefficient, "exponent": self.exponent}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> PowerLaw:
        return cls(d["coefficient"], d.get("exponent", 0))


def eval_coefficient(pl: PowerLaw, x):
    """Evaluate a power law at scalar or array ``x`` (``0**0 == 1``)."""
    if np.ndim(x) == 0:
        x = float(x)
        if x == 0.0:
            if pl.exponent < 0:
                raise DomainError(f"x**{pl.exponent} has a pole at x = 0")
            return pl.coefficient if pl.exponent == 0 else 0.0
        return pl.coefficient * x**pl.exponent
    x = np.asarray(x, dtype=float)
    if pl.exponent < 0 and np.any(x == 0.0):
        raise DomainError(f"x**{pl.exponent} has a pole at x = 0")
    # numpy already gives 0.0**0 == 1.0
    return pl.coefficient * np.power(x, float(pl.exponent))


@dataclass(frozen=True)
class HomingProblem:
    """Homing problem on ``[d1, d2]``.

    ``drift`` is f, ``variance`` is v (multiplied by |u| in the SDE),
    ``cost_weight`` is q.  ``lam`` is the running cost rate (any sign) and
    ``terminal_cost`` is K0, charged on exit through ``d2``.
    """

    drift: PowerLaw
    variance: PowerLaw
    cost_weight: PowerLaw
    lam: float
    terminal_cost: float
    d1: float
    d2: float

    def __post_init__(self):
        for name in ("lam", "terminal_cost", "d1", "d2"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def f(self, x):
        return eval_coefficient(self.drift, x)

    def v(self, x):
        return eval_coefficient(self.variance, x)

    def q(self, x):
        return eval_coefficient(self.cost_weight, x)

    def h(self, x):
        """``v(x)**2 / (8 q(x))``, the coefficient of ``F''**2`` in the HJB ODE."""
        return self.v(x) ** 2 / (8.0 * self.q(x))

    def replace(self, **changes) -> HomingProblem:
        fields = {
            "drift": self.drift,
            "variance": self.variance,
            "cost_weight": self.cost_weight,
            "lam": self.lam,
            "terminal_cost": self.terminal_cost,
            "d1": self.d1,
            "d2": self.d2,
        }
        fields.update(changes)
        return HomingProblem(**fields)

    def to_dict(self) -> dict[str, Any]:
        return {
            "drift": self.drift.to_dict(),
            "variance": self.variance.to_dict(),
            "cost_weight": self.cost_weight.to_dict(),
            "lambda": self.lam,
            "terminal_cost": self.terminal_cost,
            "d1": self.d1,
            "d2": self.d2,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> HomingProblem:
        missing = {"drift", "variance", "cost_weight", "terminal_cost", "d1", "d2"} - set(d)
        if missing:
            raise DomainError(f"problem document is missing keys: {sorted(missing)}")
        return cls(
            drift=PowerLaw.from_dict(d["drift"]),
            variance=PowerLaw.from_dict(d["variance"]),
            cost_weight=PowerLaw.from_dict(d["cost_weight"]),
            lam=d.get("lambda", 0.0),
            terminal_cost=d["terminal_cost"],
            d1=d["d1"],
            d2=d["d2"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> HomingProblem:
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> HomingProblem:
        return cls.from_json(Path(path).read_text())


class CaseKind(str, Enum):
    CASE1 = "case1"
    CASE2 = "case2"
    BOTH = "both"
    NEITHER = "neither"


@dataclass(frozen=True)
class CaseTag:
    """Which closed-form families apply, with their exponent and coefficient.

    Case 1 (constant drift): ``h(x) = v**2/(8q) = h0 * x**n``.
    Case 2 (``lambda == 0``): ``g(x) = v**2/(8 q f) = g0 * x**m``.
    """

    kind: CaseKind
    n: int | None = None
    h0: float | None = None
    m: int | None = None
    g0: float | None = None

    @property
    def has_case1(self) -> bool:
        return self.kind in (CaseKind.CASE1, CaseKind.BOTH)

    @property
    def has_case2(self) -> bool:
        return self.kind in (CaseKind.CASE2, CaseKind.BOTH)

    def __str__(self):
        if self.kind is CaseKind.BOTH:
            return f"Both(n={self.n}, h0={self.h0:g}, m={self.m}, g0={self.g0:g})"
        if self.kind is CaseKind.CASE1:
            return f"Case1(n={self.n}, h0={self.h0:g})"
        if self.kind is CaseKind.CASE2:
            return f"Case2(m={self.m}, g0={self.g0:g})"
        return "Neither"


def _case_parameters(p: HomingProblem) -> tuple[int | None, float | None, int | None, float | None]:
    j, k, l = p.variance.exponent, p.drift.exponent, p.cost_weight.exponent
    v0, f0, q0 = p.variance.coefficient, p.drift.coefficient, p.cost_weight.coefficient
    n = h0 = m = g0 = None
    if k == 0 and (2 * j - l) in CASE1_RANGE:
        n, h0 = 2 * j - l, v0**2 / (8.0 * q0)
    if p.lam == 0.0 and (2 * j - l - k) in CASE2_RANGE:
        m, g0 = 2 * j - l - k, v0**2 / (8.0 * q0 * f0)
    return n, h0, m, g0


def classify(p: HomingProblem) -> CaseTag:
    """Tag the problem with the closed-form families that cover it."""
    n, h0, m, g0 = _case_parameters(p)
    if n is not None and m is not None:
        return CaseTag(CaseKind.BOTH, n, h0, m, g0)
    if n is not None:
        return CaseTag(CaseKind.CASE1, n=n, h0=h0)
    if m is not None:
        return CaseTag(CaseKind.CASE2, m=m, g0=g0)
    return CaseTag(CaseKind.NEITHER)


def validate_problem(p: HomingProblem) -> HomingProblem:
    """Return ``p`` unchanged if it is well posed, else raise DomainError.

    A zero left end point is only allowed when nothing the solvers evaluate
    has a pole or a logarithm there: every coefficient exponent must be
    nonnegative and every applicable closed-form exponent must be <= 0
    (positive exponents put ``x**(-e/2)`` or ``ln x`` into F'').
    """
    for name in ("lam", "terminal_cost", "d1", "d2"):
        if not math.isfinite(getattr(p, name)):
            raise DomainError(f"{name} must be finite, got {getattr(p, name)!r}")
    if p.d1 < 0:
        raise DomainError(f"d1 >= 0 violated: d1 = {p.d1}")
    if not p.d1 < p.d2:
        raise DomainError(f"d1 < d2 violated: d1 = {p.d1}, d2 = {p.d2}")
    for name in ("drift", "variance", "cost_weight"):
        pl = getattr(p, name)
        if not isinstance(pl, PowerLaw):
            raise DomainError(f"{name} must be a PowerLaw, got {type(pl).__name__}")
        if not pl.coefficient > 0:
            raise DomainError(f"{name} coefficient must be > 0, got {pl.coefficient}")
    if not p.terminal_cost > 0:
        raise DomainError(f"terminal_cost K0 > 0 violated: K0 = {p.terminal_cost}")
    if p.d1 == 0.0:
        for name in ("drift", "variance", "cost_weight"):
            pl = getattr(p, name)
            if pl.exponent < 0:
                raise DomainError(f"d1 must be > 0: {name} has a pole at 0 (exponent {pl.exponent})")
        n, _, m, _ = _case_parameters(p)
        for label, e in (("n", n), ("m", m)):
            if e is not None and e > 0:
                what = "ln x" if e in LOG_BRANCHES else f"x**({-e}/2)"
                raise DomainError(f"d1 must be > 0: branch {label}={e} contains {what}")
    return p
