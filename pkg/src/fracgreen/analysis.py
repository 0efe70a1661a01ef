"""Norms, weak residuals and the experiment drivers.

The weak residual pairs a discrete solution with smooth test bumps whose
fractional Laplacian is computed by quadrature independent of the operator
table, so it checks the solver rather than restating it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import roots_jacobi

from .boundary import fractional_normal_test
from .errors import ValidationError
from .green import build_green, gradient, green_kernel_values, nonlocal_normal_derivative
from .model import (EXTERIOR, FracParams, Grid, GridField, GrowthSpec, ProblemSpec, RadonMeasure, Solution,
                    SolverConfig)
from .solver import (ball_exponent, mollify_measure, picard_solve, prepare, solve_full)

# --------------------------------------------------------------------------
# test functions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Bump:
    """``exp(-1 / (1 - ((x - c) / w)^2))`` on ``|x - c| < w``."""

    center: float
    width: float

    def __call__(self, x) -> np.ndarray:
        t = (np.asarray(x, dtype=float) - self.center) / self.width
        out = np.zeros(np.shape(t))
        m = np.abs(t) < 1.0
        out[m] = np.exp(-1.0 / (1.0 - t[m] ** 2))
        return out

    @property
    def support(self) -> tuple[float, float]:
        return self.center - self.width, self.center + self.width


def _panel_rule(z_max: float, first: float, alpha: float, order: int = 16, panels: int = 160):
    """Nodes/weights for ``int_0^{z_max} psi(z) z^{1-2a} dz`` with smooth ``psi``.

    Gauss-Jacobi on ``[0, first]`` carries the algebraic weight; the rest is
    composite Gauss-Legendre with the weight folded into the values.
    """
    b = 1.0 - 2.0 * alpha
    tj, wj = roots_jacobi(order, 0.0, b)
    z0 = 0.5 * first * (tj + 1.0)
    w0 = wj * (0.5 * first) ** (b + 1.0)
    tl, wl = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(first, z_max, panels + 1)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    z1 = (mid[:, None] + half[:, None] * tl[None, :]).ravel()
    w1 = (half[:, None] * wl[None, :]).ravel() * z1 ** b
    return np.concatenate([z0, z1]), np.concatenate([w0, w1])


def fraclap_quadrature(phi: Callable[[np.ndarray], np.ndarray], x: np.ndarray, params: FracParams,
                       reach: float = 2.0) -> np.ndarray:
    """``(-Delta)^a phi`` at points ``x`` for a smooth ``phi`` supported in the domain.

    Uses ``C int_0^inf (2 phi(x) - phi(x+z) - phi(x-z)) z^{-1-2a} dz``.  For
    ``z > reach`` (the domain diameter) only ``2 phi(x)`` survives and that
    part is integrated exactly.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    a = params.alpha
    z, w = _panel_rule(reach, 0.01, a)
    f0 = phi(x)
    psi = (2.0 * f0[:, None] - phi(x[:, None] + z[None, :]) - phi(x[:, None] - z[None, :])) / z[None, :] ** 2
    return params.c_norm * (psi @ w + 2.0 * f0 * reach ** (-2 * a) / (2 * a))


@dataclass(frozen=True, eq=False)
class TestBattery:
    """Bumps with their fractional Laplacians at the grid nodes, plus C_alpha functions.

    Every bump vanishes within 0.05 of the boundary.
    """

    grid: Grid
    params: FracParams
    bumps: tuple
    laplacians: tuple
    calpha: tuple = ()

    __test__ = False  # not a pytest class

    @classmethod
    def build(cls, grid: Grid, params: FracParams, size: int = 8, seed: int = 0,
              margin: float = 0.05) -> "TestBattery":
        rng = np.random.default_rng(seed)
        bumps = []
        for _ in range(size):
            w = rng.uniform(0.25, 0.5)
            c = rng.uniform(-1.0 + margin + w, 1.0 - margin - w)
            bumps.append(Bump(float(c), float(w)))
        laps = tuple(fraclap_quadrature(b, grid.nodes, params) for b in bumps)
        a = params.alpha
        calpha = tuple(_calpha_family(a, k) for k in range(3))
        return cls(grid, params, tuple(bumps), laps, calpha)


def _calpha_family(alpha: float, k: int) -> Callable[[np.ndarray], np.ndarray]:
    """``(1 - x^2)_+^a`` times a smooth positive factor, so ``xi / d^a`` is continuous."""
    def xi(x, k=k):
        x = np.asarray(x, dtype=float)
        return np.clip(1.0 - x * x, 0.0, None) ** alpha * (1.0 + 0.5 * k * x + 0.25 * k * x * x)
    return xi


# --------------------------------------------------------------------------
# norms and residuals
# --------------------------------------------------------------------------

def _w1q(values: np.ndarray, grid: Grid, q: float) -> float:
    v = np.asarray(values, dtype=float)
    return float((grid.h * np.sum(np.abs(v) ** q) + grid.h * np.sum(np.abs(gradient(v, grid)) ** q))
                 ** (1.0 / q))


def w1q_norm(u: GridField, q: float) -> float:
    """Discrete ``W^{1,q}`` norm with the nodal gradient."""
    if q < 1:
        raise ValidationError("exponent", f"W^{{1,q}} norm needs q >= 1, got {q}")
    return _w1q(u.values, u.grid, q)


def weighted_gradient_norm(u: GridField | np.ndarray, grid: Grid, q: float, alpha: float) -> float:
    """``|| |grad u| d^{1-a} ||_{L^q}``."""
    v = u.values if isinstance(u, GridField) else np.asarray(u)
    return float((grid.h * np.sum((np.abs(gradient(v, grid)) * grid.dist ** (1 - alpha)) ** q)) ** (1.0 / q))


@dataclass(frozen=True)
class ResidualTerms:
    operator: float
    growth: float
    interior: float
    exterior: float
    boundary: float
    operator_abs: float = 0.0

    @property
    def value(self) -> float:
        return self.operator - self.growth - self.interior + self.exterior - self.boundary

    @property
    def scale(self) -> float:
        data = abs(self.growth) + abs(self.interior) + abs(self.exterior) + abs(self.boundary)
        if data == 0.0:
            # the exact operator pairing is zero as well, so use its absolute integrand
            return self.operator_abs
        return abs(self.operator) + data

    @property
    def normalized(self) -> float:
        s = self.scale
        return abs(self.value) / s if s > 0 else 0.0


def residual_terms(u: GridField, problem: ProblemSpec, phi: Bump, lap_phi: np.ndarray,
                   g_values: np.ndarray | None = None) -> ResidualTerms:
    grid, params = u.grid, problem.params
    phi_nodes = phi(grid.nodes)
    t_op = grid.integrate(u.values * lap_phi)
    if g_values is None:
        g_values = problem.g.evaluate(grid, np.abs(gradient(u.values, grid)))
    t_g = grid.integrate(g_values * phi_nodes)
    nu = problem.nu
    t_nu = 0.0
    if problem.sigma > 0:
        t_nu = float(np.dot(nu.masses, phi(nu.points[:, 0])))
        if nu.density is not None:
            t_nu += grid.integrate(nu.density_values(grid) * phi_nodes)
        t_nu *= problem.sigma
    t_mu = 0.0
    if problem.rho > 0:
        for z, m in zip(problem.mu.points[:, 0], problem.mu.masses):
            t_mu += m * nonlocal_normal_derivative(phi, z, params)
        t_mu *= problem.rho
    t_eta = 0.0
    if problem.eta is not None:
        for z, m in zip(problem.eta.points[:, 0], problem.eta.masses):
            t_eta += m * fractional_normal_test(phi, z, params).value
    return ResidualTerms(t_op, t_g, t_nu, t_mu, t_eta, grid.integrate(np.abs(u.values * lap_phi)))


def weak_residual(u: GridField | Solution, problem: ProblemSpec, battery: TestBattery,
                  g_values: np.ndarray | None = None) -> float:
    """Largest normalized weak-form defect over the battery.

    Each term of the identity is integrated on its own and the defect is
    divided by the sum of the absolute terms.  When every data pairing
    vanishes (data concentrated off the support of the bump) the scale is
    the integral of ``|u (-Delta)^a phi|`` instead.
    """
    if isinstance(u, Solution):
        u = u.u
    if u.grid != battery.grid:
        raise ValidationError("grid", "battery and field live on different grids")
    return max(residual_terms(u, problem, b, lap, g_values).normalized
               for b, lap in zip(battery.bumps, battery.laplacians))


# --------------------------------------------------------------------------
# comparison
# --------------------------------------------------------------------------

@dataclass
class ComparisonConfig:
    problem: ProblemSpec
    bump_amplitude: float = 0.2
    bump: Bump = field(default_factory=lambda: Bump(0.2, 0.3))
    tol: float = 1e-6
    seed: int = 0


@dataclass
class ComparisonReport:
    ordering_violation: float
    ordering_node: Optional[int]
    sigma_violation: float
    uniqueness_gap: float
    tol: float

    @property
    def ordered(self) -> bool:
        return self.ordering_violation <= self.tol and self.sigma_violation <= self.tol

    @property
    def unique(self) -> bool:
        return self.uniqueness_gap <= self.tol

    @property
    def passed(self) -> bool:
        return self.ordered and self.unique


def _solve_with_density(problem: ProblemSpec, ctx, extra: np.ndarray | None, v0=None) -> np.ndarray:
    grid = problem.grid
    levels = problem.solver.levels
    out = None
    for level in levels:
        nu_n = mollify_measure(problem.nu, level, grid, problem.solver.mollifier_radius).values
        if extra is not None:
            nu_n = nu_n + extra
        sol = picard_solve(problem, level, ctx, v0=v0 if out is None else out.g_part.values,
                           nu_density=nu_n)
        out = sol
    return out.u.values


def comparison_experiment(cfg: ComparisonConfig) -> ComparisonReport:
    """Ordered sources give ordered solutions; two starts give one solution.

    The problem must have ``1 <= p < p*``.  The larger source adds
    ``amplitude * bump / sigma`` to the mollified ``nu``; the sigma check
    compares ``sigma = 0`` with the problem's sigma.
    """
    pb = cfg.problem
    if not 1.0 <= pb.g.p < pb.p_star:
        raise ValidationError("uniqueness", f"comparison needs 1 <= p < p*, got p = {pb.g.p}")
    grid = pb.grid
    table = build_green(grid, pb.params)
    ctx = prepare(pb, table)
    sigma = pb.sigma if pb.sigma > 0 else 1.0
    pb1 = pb.with_(sigma=sigma)
    ctx1 = prepare(pb1, table)
    bump = cfg.bump_amplitude * cfg.bump(grid.nodes) / sigma
    u1 = _solve_with_density(pb1, ctx1, None)
    u2 = _solve_with_density(pb1, prepare(pb1.with_(sigma=sigma), table), bump)
    gap = u1 - u2
    viol = float(max(0.0, gap.max()))
    node = int(np.argmax(gap)) if viol > cfg.tol else None
    # sigma = 0 against sigma > 0
    pb0 = pb1.with_(sigma=0.0)
    u0 = _solve_with_density(pb0, prepare(pb0, table), None)
    sviol = float(max(0.0, (u0 - u1).max()))
    # two starts: default v0 and a seeded positive perturbation of it
    rng = np.random.default_rng(cfg.seed)
    start = 2.0 * rng.uniform(0.5, 1.5) * np.abs(_solve_with_density(pb1, ctx1, None)) + rng.uniform(0, 0.1, grid.n)
    start = start * grid.dist ** pb.params.alpha
    ua = u1
    ub = _solve_with_density(pb1, ctx1, None, v0=start - ctx1.fixed)
    return ComparisonReport(viol, node, sviol, float(np.max(np.abs(ua - ub))), cfg.tol)


# --------------------------------------------------------------------------
# stability
# --------------------------------------------------------------------------

@dataclass
class StabilityConfig:
    problem: ProblemSpec
    schedule: Sequence[int] = (4, 8, 16, 32)
    reference_level: int = 64
    perturb_mu: bool = True


@dataclass
class StabilityReport:
    schedule: list
    distances: list
    relative: list
    eventually_decreasing: bool
    final: float
    threshold: float

    @property
    def final_ok(self) -> bool:
        return self.final <= self.threshold

    @property
    def passed(self) -> bool:
        return self.eventually_decreasing and self.final_ok

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "w1p_distance", "relative_distance"])
            for n, d, r in zip(self.schedule, self.distances, self.relative):
                w.writerow([n, repr(float(d)), repr(float(r))])


def split_atoms(mu: RadonMeasure, radius: float) -> RadonMeasure:
    """Spread each atom uniformly over the sphere of the given radius (two points in 1-D)."""
    pts = np.concatenate([mu.points - radius, mu.points + radius])
    masses = np.concatenate([mu.masses, mu.masses]) / 2.0
    return RadonMeasure(points=pts, masses=masses, support=mu.support, separation=mu.separation)


def eventually_decreasing(seq: Sequence[float], tail: int = 3) -> bool:
    s = list(seq)[-tail:]
    return all(b < a for a, b in zip(s, s[1:]))


def stability_experiment(cfg: StabilityConfig) -> StabilityReport:
    """W^{1,p} distance of perturbed-data solutions to the reference solution.

    ``nu_n`` is ``nu`` mollified at level ``n``; ``mu_n`` spreads each atom of
    ``mu`` over radius ``1/n``.  The reference uses the unperturbed ``mu`` and
    ``nu`` mollified at ``reference_level``; every solve caps ``g`` at the
    reference level so only the data vary.
    """
    pb = cfg.problem
    grid = pb.grid
    table = build_green(grid, pb.params)
    q = ball_exponent(pb.g.p)
    ref_level = cfg.reference_level
    r0 = pb.solver.mollifier_radius

    def run(problem: ProblemSpec, level: int) -> np.ndarray:
        ctx = prepare(problem, table, poisson_check=False)
        return picard_solve(problem, level, ctx, cap=ref_level, r0=r0).u.values

    u_inf = run(pb, ref_level)
    scale = _w1q(u_inf, grid, q)
    dists, rel = [], []
    for n in cfg.schedule:
        pn = pb
        if cfg.perturb_mu and pb.rho > 0 and not pb.mu.is_zero:
            pn = pb.with_(mu=split_atoms(pb.mu, 1.0 / n))
        d = _w1q(run(pn, n) - u_inf, grid, q)
        dists.append(d)
        rel.append(d / scale if scale > 0 else 0.0)
    return StabilityReport(list(cfg.schedule), dists, rel, eventually_decreasing(dists), dists[-1],
                           5.0 * pb.solver.tol)


# --------------------------------------------------------------------------
# critical exponent sweep
# --------------------------------------------------------------------------

@dataclass
class SweepConfig:
    alpha: float = 0.75
    factors: Sequence[float] = (0.5, 0.8, 0.9, 1.0, 1.1)
    ns: Sequence[int] = (128, 256, 512)
    source: float = 0.0
    extra_q: Sequence[float] = ()


@dataclass
class SweepRow:
    q: float
    factor: float
    n: int
    w1q: float
    weighted: float


@dataclass
class SweepTable:
    alpha: float
    p_star: float
    rows: list
    verdicts: dict

    def ratios(self, q: float, kind: str = "w1q") -> list[float]:
        vals = [getattr(r, kind) for r in self.rows if r.q == q]
        return [b / a for a, b in zip(vals, vals[1:])]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["alpha", "q", "q_over_pstar", "n", "w1q", "weighted", "verdict_w1q", "verdict_weighted"])
            for r in self.rows:
                v = self.verdicts[r.q]
                w.writerow([repr(self.alpha), repr(r.q), repr(r.factor), r.n, repr(r.w1q), repr(r.weighted),
                            v["w1q"], v["weighted"]])


def classify(ratios: Sequence[float]) -> str:
    if all(0.95 <= r <= 1.05 for r in ratios):
        return "stable"
    if all(r >= 1.10 for r in ratios):
        return "growing"
    return "indeterminate"


def critical_sweep(cfg: SweepConfig) -> SweepTable:
    """Refinement behaviour of norms of the Green potential of a Dirac mass.

    ``u = G(., y0)`` is evaluated from the explicit kernel at the nodes.  For
    every ``q`` the successive-refinement ratios of the ``W^{1,q}`` norm and
    of ``|| |grad u| d^{1-a} ||_q`` are classified as stable (all ratios in
    [0.95, 1.05]), growing (all >= 1.10) or indeterminate.
    """
    params = FracParams(1, cfg.alpha)
    ps = params.p_star
    qs = [(f * ps, f) for f in cfg.factors] + [(float(q), float(q) / ps) for q in cfg.extra_q]
    grids = [Grid(n) for n in cfg.ns]
    us = [green_kernel_values(g.nodes, cfg.source, params) for g in grids]
    rows, verdicts = [], {}
    for q, f in qs:
        for g, u in zip(grids, us):
            rows.append(SweepRow(q, f, g.n, _w1q(u, g, q), weighted_gradient_norm(u, g, q, cfg.alpha)))
    table = SweepTable(cfg.alpha, ps, rows, verdicts)
    for q, _ in qs:
        verdicts[q] = {"w1q": classify(table.ratios(q, "w1q")), "weighted": classify(table.ratios(q, "weighted"))}
    return table
