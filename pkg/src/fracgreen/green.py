"""Green kernel of the interval, Green and Poisson potentials, nonlocal flux.

The kernel on ``(-1, 1)`` is

    G(x, y) = k |x - y|^{2a-1} int_0^{r0} s^{a-1} (1 + s)^{-1/2} ds,
    r0 = (1 - x^2)(1 - y^2) / |x - y|^2,
    k = Gamma(1/2) / (2^{2a} pi^{1/2} Gamma(a)^2).

The incomplete integral equals ``r0^a / a * 2F1(1/2, a; a+1; -r0)``; the
hypergeometric form is used for tables and adaptive quadrature of the
integral is kept as an independent reference (``method="quad"``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, linalg
from scipy.special import gamma, hyp2f1

from .errors import (GridMismatchError, InconsistencyError, KernelSingularityError, ValidationError,
                     WrongOperatorError)
from .model import (EXTERIOR, INTERIOR, FracParams, Grid, GridField, MeasureExtension, RadonMeasure,
                    _frozen)
from .operator import OperatorTable, assemble_operator, trace_density_values

EXPLICIT = "explicit"
NUMERIC_INVERSE = "numeric-inverse"
ROUTES = (EXPLICIT, NUMERIC_INVERSE)

SINGULAR_GAP = 1e-12


def kernel_constant(params: FracParams) -> float:
    N, a = params.N, params.alpha
    return float(gamma(N / 2) / (2 ** (2 * a) * math.pi ** (N / 2) * gamma(a) ** 2))


def green_diagonal_limit(x, params: FracParams) -> np.ndarray:
    """``G(x, x)``, finite in one dimension because ``2a - 1 > 0``."""
    a = params.alpha
    x = np.asarray(x, dtype=float)
    return kernel_constant(params) * (1.0 - x * x) ** (2 * a - 1) / (a - 0.5)


def _kernel_hyp(x, y, params: FracParams) -> np.ndarray:
    a = params.alpha
    r = np.abs(x - y)
    r0 = (1.0 - x * x) * (1.0 - y * y) / (r * r)
    return kernel_constant(params) * r ** (2 * a - 1) * r0 ** a / a * hyp2f1(0.5, a, a + 1.0, -r0)


def _kernel_quad(x: float, y: float, params: FracParams) -> float:
    a = params.alpha
    r = abs(x - y)
    r0 = (1.0 - x * x) * (1.0 - y * y) / (r * r)
    # s^{a-1} singularity handled by the algebraic weight
    val = integrate.quad(lambda s: (1.0 + s) ** -0.5, 0.0, r0, weight="alg", wvar=(a - 1.0, 0.0),
                         epsabs=0.0, epsrel=1e-13, limit=200)[0]
    return kernel_constant(params) * r ** (2 * a - 1) * val


def green_kernel_ball(x: float, y: float, params: FracParams, method: str = "hyp2f1") -> float:
    """Green kernel of the unit interval at a pair of distinct interior points.

    Parameters
    ----------
    method
        ``"hyp2f1"`` (closed form) or ``"quad"`` (adaptive quadrature of the
        incomplete integral).  Both agree to roughly 1e-13.

    Raises
    ------
    KernelSingularityError
        If ``|x - y|`` is below ``1e-12``; callers regularize the diagonal.
    """
    if params.N != 1:
        raise NotImplementedError("explicit kernel implemented for N = 1")
    x, y = float(x), float(y)
    if not (abs(x) < 1.0 and abs(y) < 1.0):
        raise ValidationError("interior-support", "kernel arguments must lie in the open domain")
    if abs(x - y) < SINGULAR_GAP:
        raise KernelSingularityError(f"|x - y| = {abs(x - y):.3g} is below the safe threshold")
    if method == "quad":
        return _kernel_quad(x, y, params)
    if method != "hyp2f1":
        raise ValueError(f"unknown method {method!r}")
    return float(_kernel_hyp(x, y, params))


def green_kernel_values(x, y, params: FracParams) -> np.ndarray:
    """Vectorized kernel; coincident points return the diagonal limit."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    out = np.empty(x.shape)
    near = np.abs(x - y) < SINGULAR_GAP
    out[near] = green_diagonal_limit(x[near], params)
    far = ~near
    out[far] = _kernel_hyp(x[far], y[far], params)
    return out


# --------------------------------------------------------------------------
# tables
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GreenTable:
    """Dense Green table ``G[i, j] ~ G(x_i, x_j)``.

    ``h * G @ f`` approximates ``int G(x, y) f(y) dy`` at the nodes.  For the
    numeric-inverse route ``G = L^{-1} / h`` so this is exactly ``L^{-1} f``.
    """

    grid: Grid
    params: FracParams
    G: np.ndarray
    route: str
    operator: Optional[OperatorTable] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.grid.n

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.G - self.G.T)))

    def bound_constant(self) -> float:
        """Smallest C with G <= C min{|x-y|^{2a-1}, d^a(x)|x-y|^{a-1}, d^a(y)|x-y|^{a-1}}."""
        a = self.params.alpha
        x, d = self.grid.nodes, self.grid.dist
        X, Y = np.meshgrid(x, x, indexing="ij")
        DX, DY = np.meshgrid(d, d, indexing="ij")
        off = ~np.eye(self.n, dtype=bool)
        r = np.abs(X - Y)[off]
        bound = np.minimum(r ** (2 * a - 1), np.minimum(DX[off], DY[off]) ** a * r ** (a - 1))
        return float(np.max(self.G[off] / bound))

    def dump_slice_csv(self, path, j: int) -> None:
        """Write ``x, G(x, x_j)`` to CSV."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "G"])
            for xi, gi in zip(self.grid.nodes, self.G[:, j]):
                w.writerow([repr(float(xi)), repr(float(gi))])


def _cell_average_diagonal(grid: Grid, params: FracParams, order: int = 24) -> np.ndarray:
    """Average of ``G(x_i, .)`` over each node's cell.

    Each half cell is mapped by ``y = x_i +- (h/2) s^2`` which turns the
    ``|x - y|^{2a-1}`` cusp into a smooth integrand for Gauss-Legendre.
    """
    h, x = grid.h, grid.nodes
    s, w = np.polynomial.legendre.leggauss(order)
    s, w = 0.5 * (s + 1.0), 0.5 * w
    out = np.zeros(grid.n)
    for sign in (-1.0, 1.0):
        # nodes (n, order); cells never cross the boundary since h/2 < d(x_i)
        Y = x[:, None] + sign * 0.5 * h * s[None, :] ** 2
        vals = green_kernel_values(np.broadcast_to(x[:, None], Y.shape), Y, params)
        out += (vals * (2.0 * s[None, :]) * w[None, :]).sum(axis=1) * 0.5
    return out


def build_green(grid: Grid, params: FracParams, route: str = NUMERIC_INVERSE,
                operator: OperatorTable | None = None) -> GreenTable:
    """Green table by the explicit kernel or by inverting the operator table.

    The explicit route fills off-diagonal entries from the kernel and the
    diagonal with the kernel averaged over the node's cell.  The numeric
    route solves ``L g = e_j / h`` for every node ``j``.
    """
    if route not in ROUTES:
        raise ValueError(f"unknown route {route!r}")
    if route == EXPLICIT:
        x = grid.nodes
        X, Y = np.meshgrid(x, x, indexing="ij")
        off = ~np.eye(grid.n, dtype=bool)
        G = np.empty((grid.n, grid.n))
        G[off] = _kernel_hyp(X[off], Y[off], params)
        G[np.diag_indices(grid.n)] = _cell_average_diagonal(grid, params)
        G = 0.5 * (G + G.T)
        return GreenTable(grid, params, _frozen(G), route, operator)
    if operator is None:
        operator = assemble_operator(grid, params)
    elif operator.grid != grid:
        raise GridMismatchError("operator table lives on another grid")
    G = linalg.solve(operator.weights, np.eye(grid.n) / grid.h, assume_a="pos")
    G = 0.5 * (G + G.T)
    return GreenTable(grid, params, _frozen(G), route, operator)


# --------------------------------------------------------------------------
# potentials
# --------------------------------------------------------------------------

Source = Union[RadonMeasure, GridField, np.ndarray]


def green_apply(table: GreenTable, source: Source) -> GridField:
    """Green potential of an interior density or measure.

    Densities use the table (``h * G @ f``).  Atoms use the kernel directly on
    the explicit route and a ``mass / h`` spike at the nearest node on the
    numeric route.
    """
    grid = table.grid
    if isinstance(source, np.ndarray):
        source = GridField(grid, source)
    if isinstance(source, GridField):
        if source.grid != grid:
            raise GridMismatchError("source lives on another grid")
        return GridField(grid, grid.h * (table.G @ source.values))
    if not isinstance(source, RadonMeasure):
        raise TypeError(f"unsupported source type {type(source).__name__}")
    if source.support != INTERIOR:
        raise WrongOperatorError(f"{source.support}-supported measure: use poisson_apply or the boundary module")
    out = np.zeros(grid.n)
    if source.density is not None:
        out += grid.h * (table.G @ source.density_values(grid))
    for z, m in zip(source.points[:, 0], source.masses):
        if m == 0:
            continue
        if table.route == EXPLICIT:
            out += m * green_kernel_values(grid.nodes, z, table.params)
        else:
            out += m * table.G[:, grid.nearest(z)]
    return GridField(grid, out)


def exterior_trace_density(mu: RadonMeasure, grid: Grid, params: FracParams) -> GridField:
    """``w_mu(x) = C int |z - x|^{-1-2a} dmu(z)`` at the nodes."""
    if mu.support != EXTERIOR:
        raise WrongOperatorError("trace density needs an exterior-supported measure")
    if np.any(mu.radii <= 1.0):
        raise ValidationError("exterior-support", "exterior measure has atoms in the closed domain")
    return GridField(grid, trace_density_values(mu, grid.nodes, params))


def _tanh_sinh(level: float = 1.0 / 24, span: float = 4.0):
    """Double-exponential nodes on (0, 1): returns ``tau, 1 - tau, weights``."""
    t = np.arange(-span, span + level / 2, level)
    q = 0.5 * math.pi * np.sinh(t)
    tau = 1.0 / (1.0 + np.exp(-2.0 * q))
    comp = 1.0 / (1.0 + np.exp(2.0 * q))
    w = level * 0.5 * math.pi * np.cosh(t) / (2.0 * np.cosh(q) ** 2)
    keep = (tau > 0) & (comp > 0)
    return tau[keep], comp[keep], w[keep]


def green_moment(x: np.ndarray, weight: Callable[[np.ndarray], np.ndarray], params: FracParams) -> np.ndarray:
    """``int_Omega G(x, y) k(y) dy`` at every ``x`` for a smooth weight ``k``.

    Splits at ``y = x`` and integrates both halves by tanh-sinh quadrature,
    which absorbs the cusp at ``y = x`` and the ``(1 -+ y)^a`` edges.
    """
    x = np.asarray(x, dtype=float)
    tau, comp, w = _tanh_sinh()
    out = np.zeros(len(x))
    for side in (1.0, -1.0):
        # y = x + side * (1 - side x) tau; distance to the near edge is (1 - side x) comp
        span = 1.0 - side * x
        Y = x[:, None] + side * span[:, None] * tau[None, :]
        Y = np.clip(Y, -1.0 + 1e-300, 1.0 - 1e-300)
        vals = green_kernel_values(np.broadcast_to(x[:, None], Y.shape), Y, params) * weight(Y)
        out += span * (vals * w[None, :]).sum(axis=1)
    return out


def _poisson_kernel_pairing(x: np.ndarray, z: float, params: FracParams) -> np.ndarray:
    """``C int_Omega G(x, y) |z - y|^{-1-2a} dy`` for each node ``x``."""
    C, a = params.c_norm, params.alpha
    return C * green_moment(x, lambda y: np.abs(z - y) ** (-1 - 2 * a), params)


def poisson_apply(mu: RadonMeasure, table: GreenTable, params: FracParams | None = None,
                  tol: float = 0.02, check: bool = True, report: dict | None = None) -> GridField:
    """Poisson potential of exterior data.

    Route (a) applies the Green table to ``w_mu``; route (b) pairs the
    kernel's nonlocal normal derivative with each atom by adaptive
    quadrature.  Route (a) is returned, with the exterior rule set to
    ``mu`` so the field is discretely harmonic.  The relative sup
    discrepancy is written to ``report["poisson_discrepancy"]``.

    Raises
    ------
    InconsistencyError
        If the routes differ by more than ``tol``.
    """
    params = params or table.params
    grid = table.grid
    w = exterior_trace_density(mu, grid, params)
    route_a = grid.h * (table.G @ w.values)
    disc = float("nan")
    if check and not mu.is_zero:
        if mu.density is not None:
            raise NotImplementedError("route (b) is implemented for atomic exterior data")
        route_b = np.zeros(grid.n)
        for z, m in zip(mu.points[:, 0], mu.masses):
            if m > 0:
                route_b += m * _poisson_kernel_pairing(grid.nodes, z, params)
        scale = np.max(np.abs(route_b))
        disc = float(np.max(np.abs(route_a - route_b)) / scale) if scale > 0 else 0.0
        if report is not None:
            report["poisson_route_b"] = route_b
        if disc > tol:
            raise InconsistencyError(f"Poisson routes disagree: relative sup difference {disc:.3g} > {tol}")
    elif check:
        disc = 0.0
    if report is not None:
        report["poisson_discrepancy"] = disc
    return GridField(grid, route_a, MeasureExtension(mu, 1.0))


def nonlocal_normal_derivative(phi: GridField | Callable[[np.ndarray], np.ndarray], x_ext: float,
                               params: FracParams) -> float:
    """Flux ``-C int_Omega phi(y) |x_ext - y|^{-1-2a} dy`` of a zero-extended ``phi``.

    A :class:`GridField` is integrated by the nodal rule; a callable by
    adaptive quadrature.
    """
    x_ext = float(np.asarray(x_ext).reshape(-1)[0])
    if abs(x_ext) <= 1.0:
        raise ValidationError("exterior-support", f"evaluation point {x_ext} lies in the closed domain")
    C, a = params.c_norm, params.alpha
    if isinstance(phi, GridField):
        x = phi.grid.nodes
        return float(-C * phi.grid.h * np.sum(phi.values * np.abs(x_ext - x) ** (-1 - 2 * a)))
    val = integrate.quad(lambda y: float(np.asarray(phi(np.array([y])))[0]) * abs(x_ext - y) ** (-1 - 2 * a),
                         -1.0, 1.0, limit=200, epsabs=0.0, epsrel=1e-11)[0]
    return float(-C * val)


# --------------------------------------------------------------------------
# derivatives and norms
# --------------------------------------------------------------------------

def gradient(u: GridField | np.ndarray, grid: Grid | None = None) -> np.ndarray:
    """Nodal derivative: central inside, one-sided second order at the end nodes.

    The end stencils use interior nodes only, so the ``d^{a-1}`` blow-up of
    Green potentials is sampled rather than differenced across the boundary.
    """
    if isinstance(u, GridField):
        grid, v = u.grid, u.values
    else:
        v = np.asarray(u, dtype=float)
    h = grid.h
    g = np.empty_like(v)
    g[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    g[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    g[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    return g


def lp_norm(values: np.ndarray, grid: Grid, p: float) -> float:
    """Nodal-rule L^p norm (a quasi-norm for ``p < 1``)."""
    return float((grid.h * np.sum(np.abs(values) ** p)) ** (1.0 / p))


def gradient_bound_probe(table: GreenTable, j: int) -> float:
    """``max_x |d/dx G(x, y_j)| d(x)^{1-a} |x - y_j|^{2-2a}`` over nodes ``x != y_j``."""
    a = table.params.alpha
    grid = table.grid
    g = gradient(table.G[:, j], grid)
    r = np.abs(grid.nodes - grid.nodes[j])
    mask = r > 1.5 * grid.h
    return float(np.max(np.abs(g[mask]) * grid.dist[mask] ** (1 - a) * r[mask] ** (1 - (2 * a - 1))))
