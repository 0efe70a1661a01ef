"""Smallness certificate, approximation sequences and the Picard loop.

The fixed-point map at level ``n`` is

    T_n(v) = G[ min(g(x, |grad(v + F)|), n) + sigma * nu_n ],

where ``F = rho * P[mu]`` (plus an optional fixed shift) and ``nu_n`` is the
mollified interior measure.  The ball radius ``lambda*`` is the smallest
positive root of the smallness function built from ``c0``, the L^1 -> W^{1,p}
norm of the Green operator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import BallEscapeError, NonConvergenceError, NoRootError, ValidationError
from .green import GreenTable, NUMERIC_INVERSE, build_green, gradient, green_apply, lp_norm, poisson_apply
from .model import (GridField, Grid, GrowthSpec, MeasureExtension, ProblemSpec, RadonMeasure, Solution,
                    validate_problem)

log = logging.getLogger(__name__)

SUPERLINEAR = "superlinear"
SUBLINEAR = "sublinear"
BALL_SLACK = 1.05


def regime_of(p: float) -> str:
    return SUBLINEAR if p <= 1.0 else SUPERLINEAR


def ball_exponent(p: float) -> float:
    """Exponent of the gradient ball: ``p`` when superlinear, 1 otherwise."""
    return max(p, 1.0)


@dataclass(frozen=True)
class SmallnessCoeffs:
    """Coefficients of the smallness function.

    ``grad_p_poisson`` is ``||grad(rho P)||_p^p`` in the superlinear regime and
    ``||grad(rho P)||_1`` in the sublinear one.
    """

    c0: float
    c: float
    p: float
    eps_f_l1: float = 0.0
    sigma_C0: float = 0.0
    grad_p_poisson: float = 0.0
    domain_vol: float = 2.0

    def __post_init__(self):
        for name in ("c", "p", "eps_f_l1", "sigma_C0", "grad_p_poisson", "domain_vol"):
            if getattr(self, name) < 0:
                raise ValidationError("smallness", f"{name} must be nonnegative")
        if not self.c0 > 0:
            raise ValidationError("smallness", "c0 must be positive")

    def with_c(self, c: float) -> "SmallnessCoeffs":
        return SmallnessCoeffs(self.c0, c, self.p, self.eps_f_l1, self.sigma_C0, self.grad_p_poisson,
                               self.domain_vol)


# --------------------------------------------------------------------------
# c0 and the smallness function
# --------------------------------------------------------------------------

def estimate_c0(table: GreenTable, grid: Grid | None = None, p: float = 1.0,
                probes: Sequence | None = None, record: dict | None = None) -> float:
    """Largest ``||grad G[s]||_{L^q} / ||s||_{L^1}`` over a probe set, ``q = max(p, 1)``.

    Probes are node indices (unit Dirac at that node, i.e. a Green column) or
    nonnegative :class:`GridField` densities.  The default set is every node
    plus the uniform density, which makes the ball bound exact for the
    discrete map since any nonnegative source is a combination of node Diracs.
    """
    grid = grid or table.grid
    q = ball_exponent(p)
    if probes is None:
        probes = list(range(grid.n)) + [GridField(grid, np.ones(grid.n))]
    best, arg = 0.0, None
    cols = [j for j in probes if isinstance(j, (int, np.integer))]
    if cols:
        grads = np.apply_along_axis(gradient, 0, table.G[:, cols], grid)
        norms = (grid.h * np.sum(np.abs(grads) ** q, axis=0)) ** (1.0 / q)
        k = int(np.argmax(norms))
        best, arg = float(norms[k]), f"node {cols[k]}"
    for j, s in enumerate(pr for pr in probes if not isinstance(pr, (int, np.integer))):
        mass = grid.integrate(np.abs(s.values))
        if mass == 0:
            continue
        val = lp_norm(gradient(green_apply(table, s)), grid, q) / mass
        if val > best:
            best, arg = val, f"density {j}"
    if record is not None:
        record.update(c0=best, c0_argmax=arg, c0_probes=len(probes), c0_exponent=q)
    return best


def evaluate_F(lam: float, coeffs: SmallnessCoeffs, regime: str | None = None) -> float:
    """Smallness function; a root certifies the gradient ball of radius ``lam``."""
    if not lam > 0:
        raise ValidationError("smallness", f"lambda must be positive, got {lam}")
    regime = regime or regime_of(coeffs.p)
    k = coeffs
    if regime == SUPERLINEAR:
        a = k.c * 2.0 ** (k.p - 1.0)
        return k.c0 * (a * lam ** (k.p - 1.0) + (a * k.grad_p_poisson + k.eps_f_l1 + k.sigma_C0) / lam) - 1.0
    if regime == SUBLINEAR:
        lin = k.c0 * k.sigma_C0 / lam - 1.0
        if k.c == 0.0:
            # eps |f| / c * c collapses to eps |f|
            return k.c0 * k.eps_f_l1 / lam + lin
        return k.c0 * k.c * (1.0 + (k.grad_p_poisson + k.eps_f_l1 / k.c + k.domain_vol) / lam) + lin
    raise ValueError(f"unknown regime {regime!r}")


LAMBDA_LO, LAMBDA_HI = 1e-8, 1e8


def _min_F(coeffs: SmallnessCoeffs, regime: str) -> float:
    grid = np.logspace(math.log10(LAMBDA_LO), math.log10(LAMBDA_HI), 801)
    vals = np.array([evaluate_F(l, coeffs, regime) for l in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda t: evaluate_F(math.exp(t), coeffs, regime),
                                   bounds=(math.log(lo), math.log(hi)), method="bounded",
                                   options={"xatol": 1e-12})
    return float(min(vals[k], res.fun))


def critical_c(coeffs: SmallnessCoeffs, regime: str | None = None) -> float:
    """Largest ``c`` with ``min_lambda F < 0`` (root finding on ``c``)."""
    regime = regime or regime_of(coeffs.p)
    if regime == SUBLINEAR:
        # F -> c0 c - 1 as lambda -> inf, so the threshold is exactly 1/c0
        return 1.0 / coeffs.c0
    m = lambda c: _min_F(coeffs.with_c(c), regime)  # noqa: E731
    if m(0.0) >= 0:
        return 0.0
    hi = max(coeffs.c, 1e-6)
    while m(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            return math.inf
    return float(optimize.brentq(m, 0.0, hi, xtol=1e-14, rtol=1e-12))


def lambda_star(coeffs: SmallnessCoeffs, regime: str | None = None, record: dict | None = None) -> float:
    """Smallest positive root of the smallness function.

    A geometric scan over ``[1e-8, 1e8]`` brackets the first sign change from
    positive to non-positive and bisection refines it to relative 1e-10.
    Returns ``0.0`` when there are no data terms (the zero ball suffices).

    Raises
    ------
    NoRootError
        When no sign change exists; ``c_max`` carries the largest admissible
        growth coefficient.
    """
    regime = regime or regime_of(coeffs.p)
    grid = np.logspace(math.log10(LAMBDA_LO), math.log10(LAMBDA_HI), 1601)
    vals = np.array([evaluate_F(l, coeffs, regime) for l in grid])
    if vals[0] <= 0:
        if record is not None:
            record["lambda_star_note"] = "F <= 0 at the scan start; trivial ball"
        return 0.0
    neg = np.nonzero(vals <= 0)[0]
    if len(neg) == 0:
        cmax = critical_c(coeffs, regime)
        raise NoRootError(f"smallness condition fails: c = {coeffs.c:.6g} exceeds the admissible "
                          f"maximum c_max = {cmax:.6g}", c_max=cmax)
    k = int(neg[0])
    lo, hi = grid[k - 1], grid[k]
    while hi - lo > 1e-10 * hi:
        mid = 0.5 * (lo + hi)
        if evaluate_F(mid, coeffs, regime) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# approximation sequences
# --------------------------------------------------------------------------

def _bump(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    m = np.abs(t) < 1.0
    out[m] = np.exp(-1.0 / (1.0 - t[m] ** 2))
    return out


def mollify_atom(grid: Grid, z: float, mass: float, radius: float) -> np.ndarray:
    """Nodal density of a smooth bump of the given radius and mass around ``z``.

    The bump is clipped to the domain and renormalized.  If it covers no
    node the mass goes to the nearest node.
    """
    w = _bump((grid.nodes - z) / radius)
    if z - radius <= -1.0 or z + radius >= 1.0:
        log.warning("mollifier around %.4g is clipped by the boundary; mass renormalized", z)
    total = grid.integrate(w)
    if total <= 0.0:
        w = np.zeros(grid.n)
        w[grid.nearest(z)] = 1.0
        total = grid.h
    return mass * w / total


def mollify_measure(nu: RadonMeasure, n: int, grid: Grid, r0: float = 0.5) -> GridField:
    """Smooth density ``nu_n`` of radius ``r0 / n`` with the mass of ``nu``."""
    if n < 1:
        raise ValidationError("level", f"mollification index must be >= 1, got {n}")
    r = r0 / n
    out = np.zeros(grid.n)
    for z, m in zip(nu.points[:, 0], nu.masses):
        if m > 0:
            out += mollify_atom(grid, z, m, r)
    if nu.density is not None:
        dens = nu.density_values(grid)
        mass = grid.integrate(dens)
        k = int(math.ceil(r / grid.h))
        ker = _bump(np.arange(-k, k + 1) * grid.h / r) if k > 0 else np.ones(1)
        if ker.sum() <= 0:
            ker = np.ones(1)
        sm = np.convolve(dens, ker / ker.sum(), mode="same")
        new_mass = grid.integrate(sm)
        if new_mass > 0:
            sm *= mass / new_mass
        out += sm
    return GridField(grid, out)


def truncate_g(g: GrowthSpec, n: float) -> Callable[[Grid, np.ndarray], np.ndarray]:
    """Capped nonlinearity ``g_n = min(g, n)``."""
    if n < 1:
        raise ValidationError("level", f"truncation level must be >= 1, got {n}")

    def g_n(grid: Grid, s: np.ndarray) -> np.ndarray:
        return np.minimum(g.evaluate(grid, np.asarray(s, dtype=float)), float(n))

    return g_n


# --------------------------------------------------------------------------
# Picard loop
# --------------------------------------------------------------------------

@dataclass
class SolverContext:
    """Per-problem objects shared by every level: tables, fixed fields, certificate."""

    table: GreenTable
    poisson: GridField
    shift: Optional[GridField]
    coeffs: SmallnessCoeffs
    lambda_star: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def fixed(self) -> np.ndarray:
        out = np.array(self.poisson.values)
        if self.shift is not None:
            out = out + self.shift.values
        return out


def smallness_coeffs(problem: ProblemSpec, table: GreenTable, fixed: np.ndarray,
                     record: dict | None = None) -> SmallnessCoeffs:
    grid, g = problem.grid, problem.g
    c0 = estimate_c0(table, grid, g.p, record=record)
    grad_fixed = gradient(fixed, grid)
    if g.p > 1.0:
        gp = lp_norm(grad_fixed, grid, g.p) ** g.p
    else:
        gp = lp_norm(grad_fixed, grid, 1.0)
    return SmallnessCoeffs(c0=c0, c=g.c, p=g.p, eps_f_l1=g.eps * g.f_l1(grid),
                           sigma_C0=problem.sigma * (problem.nu.total_mass(grid) + 1.0),
                           grad_p_poisson=gp, domain_vol=grid.volume)


def prepare(problem: ProblemSpec, table: GreenTable | None = None, shift: GridField | None = None,
            poisson_check: bool = True) -> SolverContext:
    """Build the Green table, the Poisson part and the ball certificate."""
    grid = problem.grid
    diag: dict = {}
    if table is None:
        table = build_green(grid, problem.params, NUMERIC_INVERSE)
    if problem.rho > 0 and not problem.mu.is_zero:
        P = poisson_apply(problem.mu, table, problem.params, check=poisson_check, tol=0.05, report=diag)
        diag.pop("poisson_route_b", None)
        poisson = GridField(grid, problem.rho * P.values, MeasureExtension(problem.mu, problem.rho))
    else:
        poisson = GridField.zeros(grid)
    fixed = poisson.values if shift is None else poisson.values + shift.values
    coeffs = smallness_coeffs(problem, table, fixed, record=diag)
    lam = lambda_star(coeffs, regime_of(problem.g.p), record=diag)
    diag["lambda_star"] = lam
    diag["regime"] = regime_of(problem.g.p)
    diag["certificate"] = "heuristic: c0 is a probe maximum over the discrete Green table"
    return SolverContext(table, poisson, shift, coeffs, lam, diag)


def picard_solve(problem: ProblemSpec, level: int, ctx: SolverContext | None = None,
                 v0: np.ndarray | None = None, r0: float | None = None, cap: float | None = None,
                 nu_density: np.ndarray | None = None) -> Solution:
    """Damped Picard iteration for the level-``level`` fixed point.

    Iterations count applications of the map.  ``theta`` is halved whenever
    the relative L^1 increment grows (from the third increment on).  Every iterate is checked against the
    ball ``||grad v||_q <= 1.05 lambda*`` with ``q = max(p, 1)``.

    ``level`` sets both the mollification index of ``nu`` and the cap on
    ``g``; ``cap`` and ``nu_density`` override them separately.
    """
    ctx = ctx or prepare(problem)
    grid, cfg, g = problem.grid, problem.solver, problem.g
    table = ctx.table
    r0 = cfg.mollifier_radius if r0 is None else r0
    if nu_density is not None:
        nu_n = np.asarray(nu_density, dtype=float)
    elif problem.sigma > 0:
        nu_n = mollify_measure(problem.nu, level, grid, r0).values
    else:
        nu_n = np.zeros(grid.n)
    g_n = truncate_g(g, level if cap is None else cap)
    fixed = ctx.fixed
    base = problem.sigma * nu_n

    def T(v):
        s = np.abs(gradient(v + fixed, grid))
        return green_apply(table, GridField(grid, g_n(grid, s) + base)).values

    q = ball_exponent(g.p)
    radius = BALL_SLACK * ctx.lambda_star
    v = green_apply(table, GridField(grid, base)).values if v0 is None else np.asarray(v0, dtype=float)
    grads = [lp_norm(gradient(v, grid), grid, q)]
    res_hist: list[float] = []
    theta = cfg.theta
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        v_new = (1.0 - theta) * v + theta * T(v)
        norm = grid.integrate(np.abs(v_new))
        diff = grid.integrate(np.abs(v_new - v))
        res = diff / norm if norm > 0 else (0.0 if diff == 0 else math.inf)
        # the first increment carries the change of level data, so it is not compared
        if len(res_hist) >= 2 and res > res_hist[-1] and theta > 1.0 / 64:
            theta *= 0.5
        res_hist.append(res)
        v = v_new
        gv = lp_norm(gradient(v, grid), grid, q)
        grads.append(gv)
        if gv > radius * (1 + 1e-12) + 1e-14:
            raise BallEscapeError(f"iterate {it} has ||grad v||_{q:g} = {gv:.6g} > 1.05 lambda* = {radius:.6g}")
        if res <= cfg.tol:
            converged = True
            break
    if not converged:
        raise NonConvergenceError(f"Picard iteration did not reach tol {cfg.tol:g} in {cfg.max_iter} "
                                  f"iterations (last residual {res_hist[-1]:.3g})")
    g_part = GridField(grid, v)
    ext = ctx.poisson.exterior
    total = v + ctx.fixed
    diag = dict(ctx.diagnostics, level=level, theta_final=theta, converged=True)
    return Solution(u=GridField(grid, total, ext), g_part=g_part, p_part=ctx.poisson, eta_part=ctx.shift,
                    iterations=it, residual_history=tuple(res_hist), lambda_star=ctx.lambda_star,
                    grad_lp_history=tuple(grads), diagnostics=diag)


def w1p_distance(u: np.ndarray, v: np.ndarray, grid: Grid, p: float) -> float:
    q = ball_exponent(p)
    d = np.asarray(u) - np.asarray(v)
    return float((grid.h * np.sum(np.abs(d) ** q) + grid.h * np.sum(np.abs(gradient(d, grid)) ** q)) ** (1 / q))


def solve_full(problem: ProblemSpec, table: GreenTable | None = None, shift: GridField | None = None,
               ctx: SolverContext | None = None) -> Solution:
    """Picard solves over the level schedule with a level-to-level W^{1,p} check.

    Convergence across levels is declared when the last relative distance is
    at most ``solver.level_tol``; the outcome is recorded in the diagnostics.
    """
    validate_problem(problem)
    ctx = ctx or prepare(problem, table, shift)
    grid, p = problem.grid, problem.g.p
    sols: list[Solution] = []
    dists: list[float] = []
    for level in problem.solver.levels:
        v0 = sols[-1].g_part.values if sols else None
        sol = picard_solve(problem, level, ctx, v0=v0)
        if sols:
            scale = w1p_distance(sol.u.values, np.zeros(grid.n), grid, p)
            dists.append(w1p_distance(sol.u.values, sols[-1].u.values, grid, p) / max(scale, 1e-300))
        sols.append(sol)
    final = sols[-1]
    diag = dict(final.diagnostics)
    diag["level_distances"] = dists
    diag["level_converged"] = bool(not dists or dists[-1] <= problem.solver.level_tol)
    diag["levels"] = list(problem.solver.levels)
    diag["iterations_per_level"] = [s.iterations for s in sols]
    return Solution(final.u, final.g_part, final.p_part, final.eta_part, final.iterations,
                    final.residual_history, final.lambda_star, final.grad_lp_history, diag)
