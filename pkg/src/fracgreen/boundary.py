"""Boundary-concentrated data: lifting, fractional normal limits, level solves.

A measure on the boundary points ``{-1, 1}`` is pushed radially onto the
level set ``{d(x) = t}`` and scaled by ``t^{-a}``.  Each lifted measure is
smoothed (radius ``t/2``) and its Green potential enters the nonlinear
problem as a fixed shift.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DivergingSequenceError, ValidationError
from .green import GreenTable, build_green, gradient, green_apply
from .model import BOUNDARY, INTERIOR, FracParams, Grid, GridField, ProblemSpec, RadonMeasure, Solution
from .solver import mollify_atom, prepare, solve_full

T0 = 0.25


@dataclass(frozen=True, eq=False)
class LiftedMeasure:
    t: float
    measure: RadonMeasure
    scale: float

    @property
    def scaled_mass(self) -> float:
        return self.scale * self.measure.atom_mass


def lift_measure(eta: RadonMeasure, t: float, params: FracParams, grid: Grid | None = None,
                 t0: float = T0) -> LiftedMeasure:
    """Push a boundary measure to the level set ``{d = t}`` by ``x -> (1 - t) x``.

    Masses are kept, so ``eta_t(E_t) = eta(E)``, and the scale is ``t^{-a}``.
    Atoms keep exact coordinates; ``grid`` is accepted for symmetry with the
    other constructors and only used to check that the level set is resolved.
    """
    if eta.support != BOUNDARY:
        raise ValidationError("boundary-support", "lift_measure needs a boundary-tagged measure")
    if not 0.0 < t < t0:
        raise ValidationError("level", f"lift parameter must satisfy 0 < t < {t0}, got {t}")
    if grid is not None and t < grid.h:
        raise ValidationError("level", f"level t = {t} is below the grid spacing {grid.h:.3g}")
    lifted = RadonMeasure(points=(1.0 - t) * eta.points, masses=eta.masses, support=INTERIOR)
    return LiftedMeasure(t, lifted, t ** (-params.alpha))


def lifted_density(lm: LiftedMeasure, grid: Grid) -> GridField:
    """Scaled, smoothed lifted measure: bumps of radius ``t/2`` around each atom."""
    out = np.zeros(grid.n)
    for z, m in zip(lm.measure.points[:, 0], lm.measure.masses):
        if m > 0:
            out += mollify_atom(grid, z, m, lm.t / 2)
    return GridField(grid, lm.scale * out)


# --------------------------------------------------------------------------
# fractional normal derivative of test functions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalLimit:
    value: float
    converged: bool
    sequence: tuple = ()
    order: float = float("nan")

    def __iter__(self):
        yield self.value
        yield self.converged


def _richardson(seq: np.ndarray, sweeps: int = 3) -> tuple[float, float]:
    """Extrapolated limit of a geometrically converging sequence and its order."""
    vals = np.asarray(seq, dtype=float)
    order = float("nan")
    for sweep in range(sweeps):
        d = np.diff(vals)
        if len(d) < 2 or d[-1] == 0 or d[-2] == 0:
            break
        r = d[-1] / d[-2]
        if not 0 < abs(r) < 1:
            break
        if sweep == 0:
            order = -math.log2(abs(r))
        vals = vals[1:] + d * (r / (1.0 - r))
    return float(vals[-1]), order


def fractional_normal_test(xi: Callable[[np.ndarray], np.ndarray], x: float, params: FracParams,
                           t0: float = T0, levels: int = 9) -> NormalLimit:
    """Limit of ``t^{-a} xi(x + t n_x)`` as ``t -> 0``, inward normal ``n_x = -x``.

    Samples ``t = t0 2^{-j}``, ``j = 0..levels-1``, and extrapolates with the
    convergence order read off consecutive difference ratios.  The flag is
    false if the differences do not shrink (no limit at the sampled scales).
    """
    x = float(np.asarray(x).reshape(-1)[0])
    if abs(abs(x) - 1.0) > 1e-14:
        raise ValidationError("boundary-support", f"|x| must be 1, got {abs(x)}")
    a = params.alpha
    t = t0 * 2.0 ** -np.arange(levels)
    pts = x + t * (-x)
    seq = t ** (-a) * np.asarray(xi(pts), dtype=float)
    d = np.abs(np.diff(seq))
    tail = d[-4:]
    cauchy = bool(np.all(tail[1:] <= tail[:-1] * (1 + 1e-12)) and (tail[-1] < 0.75 * tail[0] or tail[-1] == 0))
    if not cauchy:
        return NormalLimit(float("nan"), False, tuple(seq))
    val, order = _richardson(seq)
    return NormalLimit(val, True, tuple(seq), order)


# --------------------------------------------------------------------------
# level solves
# --------------------------------------------------------------------------

@dataclass
class ConcentratedReport:
    t: list
    l1_norm: list
    cauchy_l1: list
    w1q: dict
    bounded: dict = field(default_factory=dict)
    cauchy_decreasing: bool = False

    def rows(self) -> list[dict]:
        out = []
        qs = sorted(self.w1q)
        for k, t in enumerate(self.t):
            row = {"t": t, "l1_norm": self.l1_norm[k],
                   "cauchy_l1": self.cauchy_l1[k] if k < len(self.cauchy_l1) else float("nan")}
            for q in qs:
                row[f"w1q_{q:.6g}"] = self.w1q[q][k]
            out.append(row)
        return out

    def write_csv(self, path) -> None:
        rows = self.rows()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: repr(float(v)) for k, v in r.items()})


def w1q(values: np.ndarray, grid: Grid, q: float) -> float:
    return float((grid.h * np.sum(np.abs(values) ** q) + grid.h * np.sum(np.abs(gradient(values, grid)) ** q))
                 ** (1.0 / q))


def bounded_verdict(seq: Sequence[float]) -> bool:
    """True when successive increments shrink, i.e. the sequence settles to a finite value."""
    d = np.abs(np.diff(np.asarray(seq, dtype=float)))
    if len(d) < 2:
        return True
    return bool(np.all(d[1:] < d[:-1]))


def solve_concentrated(eta: RadonMeasure, problem: ProblemSpec, schedule: Sequence[float],
                       table: GreenTable | None = None, t0: float = T0) -> tuple[list[Solution], ConcentratedReport]:
    """Solve with the boundary datum replaced by its lifts along ``schedule``.

    Raises
    ------
    DivergingSequenceError
        If the L^1 Cauchy differences increase twice in a row.
    """
    sched = [float(t) for t in schedule]
    if any(b >= a for a, b in zip(sched, sched[1:])) or not all(0 < t < t0 for t in sched):
        raise ValidationError("level", f"schedule must decrease strictly inside (0, {t0})")
    grid, params = problem.grid, problem.params
    table = table or build_green(grid, params)
    base = problem.with_(eta=None)
    sols: list[Solution] = []
    for t in sched:
        dens = lifted_density(lift_measure(eta, t, params, t0=t0), grid)
        shift = green_apply(table, dens)
        ctx = prepare(base, table, shift=shift)
        sol = solve_full(base, ctx=ctx)
        sol.diagnostics["t"] = t
        sol.diagnostics["scaled_mass"] = grid.integrate(dens.values)
        sols.append(sol)
    pstar = params.p_star
    qs = (1.0, 0.5 * (1.0 + pstar))
    l1 = [grid.integrate(np.abs(s.u.values)) for s in sols]
    cauchy = [grid.integrate(np.abs(a.u.values - b.u.values)) for a, b in zip(sols, sols[1:])]
    norms = {q: [w1q(s.u.values, grid, q) for s in sols] for q in qs}
    rep = ConcentratedReport(sched, l1, cauchy, norms)
    rep.cauchy_decreasing = bool(all(b < a for a, b in zip(cauchy, cauchy[1:])))
    rep.bounded = {q: bounded_verdict(v) for q, v in norms.items()}
    ups = [b > a for a, b in zip(cauchy, cauchy[1:])]
    if any(u1 and u2 for u1, u2 in zip(ups, ups[1:])):
        raise DivergingSequenceError(f"L1 Cauchy differences increase twice in a row: {cauchy}")
    return sols, rep
