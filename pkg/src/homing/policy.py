"""State-feedback control rules ``x -> u(x) >= 0`` fed to the simulator."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np

from .closed_form import ClosedFormSolution, optimal_control
from .errors import DomainError
from .model import HomingProblem

KIND_ZERO, KIND_CONSTANT, KIND_OPTIMAL, KIND_TABLE = 0, 1, 2, 3


class LoweredPolicy(NamedTuple):
    """Flat numeric description of a policy, consumed by the compiled path kernel.

    ``u(x) = scale * base(x)`` where base is selected by ``kind``.
    """

    kind: int
    scale: float
    u0: float
    # closed-form optimal: -v(x)/(2q(x)) * G(x), G = ga * phi_e(x) + gb * psi_e(x)
    exponent: int
    ga: float
    gb: float
    v0: float
    j: int
    q0: float
    l: int
    grid: np.ndarray
    values: np.ndarray


_EMPTY = np.zeros(1)


def _lowered(kind, scale=1.0, u0=0.0, exponent=0, ga=0.0, gb=0.0, v0=1.0, j=0, q0=1.0, l=0,
             grid=_EMPTY, values=_EMPTY) -> LoweredPolicy:
    return LoweredPolicy(kind, scale, u0, exponent, ga, gb, v0, j, q0, l, grid, values)


class Policy:
    """Base class; subclasses implement ``_evaluate`` on arrays."""

    domain: tuple[float, float] | None = None

    def __call__(self, x):
        return eval_policy(self, x)

    def _evaluate(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def lower(self) -> LoweredPolicy:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class ZeroPolicy(Policy):
    """``u = 0``: the noise switches off and the state follows its drift."""

    def _evaluate(self, x):
        return np.zeros_like(x)

    def lower(self):
        return _lowered(KIND_ZERO)

    def to_dict(self):
        return {"kind": "zero"}


@dataclass(frozen=True)
class ConstantPolicy(Policy):
    u0: float = 1.0

    def __post_init__(self):
        if not self.u0 >= 0:
            raise DomainError(f"constant control must be >= 0, got {self.u0}")

    def _evaluate(self, x):
        return np.full_like(x, float(self.u0))

    def lower(self):
        return _lowered(KIND_CONSTANT, u0=float(self.u0))

    def to_dict(self):
        return {"kind": "constant", "u0": self.u0}


@dataclass(frozen=True)
class ClosedFormOptimalPolicy(Policy):
    problem: HomingProblem
    solution: ClosedFormSolution

    @property
    def domain(self):
        return (self.solution.d1, self.solution.d2)

    def _evaluate(self, x):
        return optimal_control(self.problem, self.solution, x)

    def lower(self):
        p, s = self.problem, self.solution
        return _lowered(
            KIND_OPTIMAL,
            exponent=s.branch.exponent,
            ga=s.c / math.sqrt(s.effective_h0),
            gb=s.effective_f0 / s.effective_h0,
            v0=p.variance.coefficient,
            j=p.variance.exponent,
            q0=p.cost_weight.coefficient,
            l=p.cost_weight.exponent,
        )

    def to_dict(self):
        return {"kind": "optimal", "problem": self.problem.to_dict(), "solution": self.solution.to_dict()}


@dataclass(frozen=True, eq=False)
class TabulatedPolicy(Policy):
    """Piecewise-linear interpolation of ``values`` on a strictly increasing grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        values = np.array(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise DomainError("tabulated policy needs matching 1-D grid and values with >= 2 points")
        if np.any(np.diff(grid) <= 0):
            raise DomainError("tabulated policy grid must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("tabulated policy values must be finite and >= 0")
        grid.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def domain(self):
        return (float(self.grid[0]), float(self.grid[-1]))

    def _evaluate(self, x):
        return np.interp(x, self.grid, self.values)

    def lower(self):
        return _lowered(KIND_TABLE, grid=self.grid, values=self.values)

    def to_dict(self):
        return {"kind": "table", "grid": self.grid.tolist(), "values": self.values.tolist()}


@dataclass(frozen=True)
class ScaledPolicy(Policy):
    base: Policy
    factor: float = 1.0

    def __post_init__(self):
        if not self.factor > 0:
            raise DomainError(f"scale factor must be > 0, got {self.factor}")

    @property
    def domain(self):
        return self.base.domain

    def _evaluate(self, x):
        return self.factor * self.base._evaluate(x)

    def lower(self):
        low = self.base.lower()
        return low._replace(scale=low.scale * float(self.factor))

    def to_dict(self):
        return {"kind": "scaled", "factor": self.factor, "base": self.base.to_dict()}


def eval_policy(pol: Policy, x):
    """Evaluate ``pol`` at scalar or array ``x``.

    Raises DomainError when the policy knows its interval and ``x`` is outside it.
    """
    xa = np.asarray(x, dtype=float)
    dom = pol.domain
    if dom is not None and (np.any(xa < dom[0]) or np.any(xa > dom[1]) or np.any(np.isnan(xa))):
        raise DomainError(f"x must lie in [{dom[0]}, {dom[1]}], got {x!r}")
    u = pol._evaluate(xa)
    return float(u) if np.ndim(x) == 0 else u


def policy_from_dict(d: dict[str, Any]) -> Policy:
    kind = d["kind"]
    if kind == "zero":
        return ZeroPolicy()
    if kind == "constant":
        return ConstantPolicy(float(d["u0"]))
    if kind == "optimal":
        return ClosedFormOptimalPolicy(HomingProblem.from_dict(d["problem"]), ClosedFormSolution.from_dict(d["solution"]))
    if kind == "table":
        return TabulatedPolicy(np.asarray(d["grid"]), np.asarray(d["values"]))
    if kind == "scaled":
        return ScaledPolicy(policy_from_dict(d["base"]), float(d["factor"]))
    raise ValueError(f"unknown policy kind {kind!r}")


def policy_from_json(text: str) -> Policy:
    return policy_from_dict(json.loads(text))
