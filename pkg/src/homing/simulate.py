"""Monte Carlo evaluation of a feedback policy by Euler-Maruyama until first exit.

Each path ``i`` draws its noise from the counter-based stream
``(base_seed, i)``, and outcomes are stored by path index before any
reduction, so estimates are bit-identical for any split of the paths
across worker threads.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from enum import IntEnum
from pathlib import Path

import numba as nb
import numpy as np

from .errors import CensoringError, DomainError, NumericalError
from .model import HomingProblem, validate_problem
from .policy import KIND_CONSTANT, KIND_OPTIMAL, KIND_TABLE, Policy
from .rng import BRIDGE_STREAM, normal_block, uniform_block

MAX_STEPS = 10**9
CENSORING_LIMIT = 0.01
# exp(-40) is below double resolution next to 1
BRIDGE_CUTOFF = 40.0


class ExitSide(IntEnum):
    LEFT = 0
    RIGHT = 1
    CENSORED = 2


@dataclass(frozen=True)
class SimulationConfig:
    """Euler step, path count, seed, censoring horizon and start point.

    ``max_time=None`` resolves to ``1e3 * (d2 - d1)**2 / min v``.  A step
    coarser than ``(d2 - d1)**2 / 100`` is refused unless ``allow_coarse_dt``.

    ``bridge`` adds a Brownian-bridge exit test to each surviving step, which
    removes the O(sqrt(dt)) bias of checking the boundary only at grid
    times.  ``noise_substeps = m`` builds each step's normal as the scaled
    sum of ``m`` consecutive stream normals, so a run at ``(dt, m=2)`` sees
    exactly the Brownian path of a run at ``(dt/2, m=1)``.
    """

    x0: float
    dt: float = 1e-4
    paths: int = 100_000
    base_seed: int = 42
    max_time: float | None = None
    bridge: bool = True
    noise_substeps: int = 1
    allow_coarse_dt: bool = False

    def resolve(self, p: HomingProblem) -> SimulationConfig:
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DomainError(f"dt must be > 0, got {self.dt}")
        if self.paths < 1:
            raise DomainError(f"paths must be >= 1, got {self.paths}")
        if not 0 <= self.base_seed < 2**64:
            raise DomainError(f"base_seed must be a 64-bit unsigned integer, got {self.base_seed}")
        if not p.d1 <= self.x0 <= p.d2:
            raise DomainError(f"x0 = {self.x0} is outside [{p.d1}, {p.d2}]")
        width = p.d2 - p.d1
        if self.dt > width**2 / 100 and not self.allow_coarse_dt:
            raise DomainError(f"dt = {self.dt:g} exceeds (d2 - d1)^2/100 = {width**2 / 100:g}; pass allow_coarse_dt to override")
        max_time = self.max_time
        if max_time is None:
            vmin = min(p.v(p.d1), p.v(p.d2))
            if vmin <= 0:
                vmin = p.v(p.d2)
            max_time = 1e3 * width**2 / vmin
        if not max_time > 0:
            raise DomainError(f"max_time must be > 0, got {max_time}")
        if max_time / self.dt > MAX_STEPS:
            raise DomainError(f"max_time / dt = {max_time / self.dt:.3g} exceeds {MAX_STEPS:.0e} steps")
        if self.noise_substeps < 1:
            raise DomainError(f"noise_substeps must be >= 1, got {self.noise_substeps}")
        return replace(self, paths=int(self.paths), base_seed=int(self.base_seed), max_time=float(max_time))

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class PathOutcome:
    exit_side: ExitSide
    exit_time: float
    cost: float
    running_cost: float


@dataclass(frozen=True, eq=False)
class PathOutcomes:
    """Per-path results indexed by ``path_index``."""

    exit_side: np.ndarray
    exit_time: np.ndarray
    cost: np.ndarray
    running_cost: np.ndarray

    def __len__(self):
        return len(self.cost)

    def __getitem__(self, i) -> PathOutcome:
        return PathOutcome(ExitSide(int(self.exit_side[i])), float(self.exit_time[i]), float(self.cost[i]), float(self.running_cost[i]))


@dataclass(frozen=True)
class McEstimate:
    mean_cost: float
    std_error: float
    n_paths: int
    exit_left_fraction: float
    exit_right_fraction: float
    censored_fraction: float
    mean_exit_time: float
    mean_running_cost: float

    def to_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@nb.njit(inline="always", cache=True)
def _ipow(x, n):
    m = n if n >= 0 else -n
    r = 1.0
    b = x
    while m:
        if m & 1:
            r *= b
        b *= b
        m >>= 1
    return r if n >= 0 else 1.0 / r


@nb.njit(inline="always", cache=True)
def _halfpow(x, twice):
    """``x ** (twice / 2)`` for integer ``twice``."""
    r = _ipow(x, (twice - (twice & 1)) // 2)
    return r * math.sqrt(x) if twice & 1 else r


@nb.njit(cache=True)
def _control(x, kind, scale, u0, e, ga, gb, pv0, pj, pq0, pl, grid, values):
    if kind == KIND_CONSTANT:
        u = u0
    elif kind == KIND_OPTIMAL:
        if e == 2:
            g = (ga + 0.5 * gb * math.log(x)) / x
        elif e == 3:
            g = ga * _halfpow(x, -3) - gb / (x * x)
        elif e == 4:
            g = (ga - 0.5 * gb / x) / (x * x)
        else:
            g = ga * _halfpow(x, -e) + gb * _ipow(x, 1 - e) / (2.0 - e)
        u = -pv0 * _ipow(x, pj) / (2.0 * pq0 * _ipow(x, pl)) * g
    elif kind == KIND_TABLE:
        n = grid.shape[0]
        if x <= grid[0]:
            u = values[0]
        elif x >= grid[n - 1]:
            u = values[n - 1]
        else:
            i = np.searchsorted(grid, x) - 1
            w = (x - grid[i]) / (grid[i + 1] - grid[i])
            u = values[i] + w * (values[i + 1] - values[i])
    else:
        u = 0.0
    u *= scale
    return u if u > 0.0 else 0.0


@nb.njit(nogil=True, cache=True)
def _run_paths(
    start, stop, offset, x0, d1, d2, K0, lam, f0, k, v0, j, q0, l,
    kind, scale, u0, e, ga, gb, pv0, pj, pq0, pl, grid, values,
    dt, max_steps, seed, bridge, substeps, side, time, cost, running, bad_step,
):
    sqdt = math.sqrt(dt)
    inv_sqrt_sub = 1.0 / math.sqrt(substeps)
    for path in range(start, stop):
        # outputs are indexed from 0; the noise streams are keyed by the absolute index
        path_index = np.uint64(offset + path)
        bad_step[path] = -1
        if x0 <= d1:
            side[path], time[path], cost[path], running[path] = 0, 0.0, 0.0, 0.0
            continue
        if x0 >= d2:
            side[path], time[path], cost[path], running[path] = 1, 0.0, K0, 0.0
            continue
        x = x0
        run = 0.0
        side[path] = 2
        time[path] = max_steps * dt
        zb = normal_block(seed, path_index, 0)
        zb_index = 0
        ub = uniform_block(seed, BRIDGE_STREAM, path_index, 0)
        ub_index = 0
        for i in range(max_steps):
            z = 0.0
            for sub in range(substeps):
                idx = i * substeps + sub
                b = idx >> 3
                if b != zb_index:
                    zb = normal_block(seed, path_index, b)
                    zb_index = b
                z += zb[idx & 7]
            if substeps > 1:
                z *= inv_sqrt_sub
            u = _control(x, kind, scale, u0, e, ga, gb, pv0, pj, pq0, pl, grid, values)
            run += (0.5 * q0 * _ipow(x, l) * u * u + lam) * dt
            var = v0 * _ipow(x, j) * u
            if var < 0.0:
                var = 0.0
            xn = x + f0 * _ipow(x, k) * dt + math.sqrt(var) * sqdt * z
            if not math.isfinite(xn):
                bad_step[path] = i
                break
            if xn <= d1:
                side[path] = 0
                time[path] = (i + 1) * dt
                break
            if xn >= d2:
                side[path] = 1
                time[path] = (i + 1) * dt
                break
            if bridge and var > 0.0:
                # chance that the frozen-coefficient bridge from x to xn touched a boundary
                scale2 = 2.0 / (var * dt)
                al = scale2 * (x - d1) * (xn - d1)
                ar = scale2 * (d2 - x) * (d2 - xn)
                p_left = math.exp(-al) if al < BRIDGE_CUTOFF else 0.0
                p_right = math.exp(-ar) if ar < BRIDGE_CUTOFF else 0.0
                if p_left > 0.0 or p_right > 0.0:
                    b = i >> 3
                    if b != ub_index:
                        ub = uniform_block(seed, BRIDGE_STREAM, path_index, b)
                        ub_index = b
                    w = ub[i & 7]
                    if w < p_left:
                        side[path] = 0
                        time[path] = (i + 1) * dt
                        break
                    if w < p_left + (1.0 - p_left) * p_right:
                        side[path] = 1
                        time[path] = (i + 1) * dt
                        break
            x = xn
        running[path] = run
        cost[path] = run + K0 if side[path] == 1 else run


def simulate_outcomes(
    p: HomingProblem,
    pol: Policy,
    cfg: SimulationConfig,
    *,
    workers: int = 1,
    chunk: int = 4096,
    paths: range | None = None,
) -> PathOutcomes:
    """Simulate paths ``paths`` (default ``range(cfg.paths)``) and return per-path outcomes.

    ``workers > 1`` runs chunks of paths on a thread pool; the compiled
    kernel releases the GIL.
    """
    validate_problem(p)
    cfg = cfg.resolve(p)
    paths = range(cfg.paths) if paths is None else paths
    if paths.step != 1:
        raise ValueError("paths must be a contiguous range")
    offset, n = paths.start, len(paths)
    lp = pol.lower()
    max_steps = int(math.ceil(cfg.max_time / cfg.dt))
    side = np.empty(n, dtype=np.int8)
    time = np.empty(n)
    cost = np.empty(n)
    running = np.empty(n)
    bad = np.empty(n, dtype=np.int64)
    args = (
        offset,
        cfg.x0, p.d1, p.d2, p.terminal_cost, p.lam,
        p.drift.coefficient, p.drift.exponent, p.variance.coefficient, p.variance.exponent,
        p.cost_weight.coefficient, p.cost_weight.exponent,
        lp.kind, lp.scale, lp.u0, lp.exponent, lp.ga, lp.gb, lp.v0, lp.j, lp.q0, lp.l,
        np.ascontiguousarray(lp.grid, dtype=float), np.ascontiguousarray(lp.values, dtype=float),
        cfg.dt, max_steps, np.uint64(cfg.base_seed), cfg.bridge, cfg.noise_substeps, side, time, cost, running, bad,
    )
    bounds = [(s, min(s + chunk, n)) for s in range(0, n, chunk)]
    if workers <= 1 or len(bounds) == 1:
        for s, e in bounds:
            _run_paths(s, e, *args)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(lambda b: _run_paths(b[0], b[1], *args), bounds))
    if np.any(bad >= 0):
        i = int(np.argmax(bad >= 0))
        raise NumericalError(f"state became non-finite on path {offset + i} at step {int(bad[i])}")
    return PathOutcomes(side, time, cost, running)


def simulate_path(p: HomingProblem, pol: Policy, cfg: SimulationConfig, path_index: int) -> PathOutcome:
    """One path of the estimator, identical to entry ``path_index`` of ``estimate_cost``."""
    out = simulate_outcomes(p, pol, cfg, paths=range(path_index, path_index + 1))
    if out.exit_side[0] == ExitSide.CENSORED:
        warnings.warn(f"path {path_index} censored at t = {out.exit_time[0]:g}", RuntimeWarning, stacklevel=2)
    return out[0]


def summarize(out: PathOutcomes) -> McEstimate:
    n = len(out)
    left = float(np.count_nonzero(out.exit_side == ExitSide.LEFT)) / n
    right = float(np.count_nonzero(out.exit_side == ExitSide.RIGHT)) / n
    censored = float(np.count_nonzero(out.exit_side == ExitSide.CENSORED)) / n
    exited = out.exit_side != ExitSide.CENSORED
    return McEstimate(
        mean_cost=float(np.mean(out.cost)),
        std_error=float(np.std(out.cost, ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        n_paths=n,
        exit_left_fraction=left,
        exit_right_fraction=right,
        censored_fraction=censored,
        mean_exit_time=float(np.mean(out.exit_time[exited])) if np.any(exited) else math.nan,
        mean_running_cost=float(np.mean(out.running_cost)),
    )


def estimate_cost(p: HomingProblem, pol: Policy, cfg: SimulationConfig, *, workers: int = 1) -> McEstimate:
    """Monte Carlo estimate of the expected cost of ``pol`` started at ``cfg.x0``.

    Raises CensoringError (carrying the estimate) when more than 1% of
    paths never exit before ``max_time``.
    """
    est = summarize(simulate_outcomes(p, pol, cfg, workers=workers))
    if est.censored_fraction > CENSORING_LIMIT:
        raise CensoringError(
            f"{100 * est.censored_fraction:.2f}% of paths censored (limit {100 * CENSORING_LIMIT:g}%); estimate unreliable",
            est,
        )
    return est


def write_paths_csv(path: str | Path, out: PathOutcomes, offset: int = 0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_index", "exit_side", "exit_time", "cost"])
        for i in range(len(out)):
            w.writerow([offset + i, ExitSide(int(out.exit_side[i])).name.lower(), f"{out.exit_time[i]:.15g}", f"{out.cost[i]:.15g}"])
