"""Dense discretization of the fractional Laplacian on the interval.

For a zero-extended grid function the operator is written as

    (-Delta)^a u(x_i) = C * int_0^inf psi_i(z) z^{1-2a} dz,
    psi_i(z) = (2 u(x_i) - u(x_i + z) - u(x_i - z)) / z^2,

where ``psi`` is bounded at ``z = 0`` for smooth ``u``.  The weight
``z^{1-2a}`` is integrated exactly against the piecewise-linear interpolant
of ``psi`` through ``z = k h``.  On the singular cell ``[0, h]`` the even
Taylor model ``psi = A + B z^2`` is used instead.  The result is a symmetric
Toeplitz matrix with negative off-diagonal entries.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.linalg import toeplitz

from .errors import AssemblyError, GridMismatchError, ValidationError
from .model import EXTERIOR, FracParams, Grid, GridField, MeasureExtension, RadonMeasure, _frozen

MIN_NODES = 8


def _power_moment(p: float, lo: np.ndarray | float, hi: np.ndarray | float):
    return (np.power(hi, p + 1) - np.power(lo, p + 1)) / (p + 1)


def interaction_weights(n: int, alpha: float, c_norm: float, K: int,
                        curvature_fraction: float = 0.9) -> np.ndarray:
    """Weights ``omega_k`` for separations ``k = 1..K`` (length-``K`` array).

    On the first cell ``psi`` is modelled as ``A + B z^2`` through its values
    at ``h`` and ``2 h``.  The ``z^2`` term moves weight from ``omega_2`` to
    ``omega_1``; it is capped at ``curvature_fraction`` of the available
    ``omega_2`` so that every off-diagonal entry stays strictly negative.
    """
    h = 2.0 / (n + 1)
    b = 1.0 - 2.0 * alpha
    W = np.zeros(K + 1)
    kk = np.arange(1, K)
    lo, hi = kk * h, (kk + 1) * h
    m0 = _power_moment(b, lo, hi)
    m1 = _power_moment(b + 1.0, lo, hi)
    W[kk] += (hi * m0 - m1) / h
    W[kk + 1] += (m1 - lo * m0) / h
    # int_0^h (z^2 - h^2) / (3 h^2) z^b dz < 0
    B0 = (_power_moment(b + 2.0, 0.0, h) - h * h * _power_moment(b, 0.0, h)) / (3.0 * h * h)
    s = min(1.0, curvature_fraction * W[2] / -B0)
    W[1] += _power_moment(b, 0.0, h) - s * B0
    W[2] += s * B0
    k = np.arange(1, K + 1)
    return c_norm * W[1:] / (k * h) ** 2


def exterior_tail(x: np.ndarray, params: FracParams) -> np.ndarray:
    """``C * int_{|y|>1} |x-y|^{-1-2a} dy`` in closed form."""
    a = params.alpha
    x = np.asarray(x, dtype=float)
    return params.c_norm * ((1.0 - x) ** (-2 * a) + (1.0 + x) ** (-2 * a)) / (2 * a)


@dataclass(frozen=True, eq=False)
class OperatorTable:
    """Assembled operator.

    ``weights`` is the full dense matrix (diagonal included).  ``tail`` is the
    row sum, i.e. the discrete operator applied to the zero-extended constant
    1; ``analytic_tail`` is the exact exterior integral it approximates.
    """

    grid: Grid
    params: FracParams
    weights: np.ndarray
    tail: np.ndarray
    analytic_tail: np.ndarray = field(repr=False)

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.weights)

    @property
    def n(self) -> int:
        return self.grid.n

    def dump_csv(self, path, rows: Sequence[int] | None = None) -> None:
        idx = range(self.n) if rows is None else rows
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", "weight"])
            for i in idx:
                for j in range(self.n):
                    w.writerow([i, j, repr(float(self.weights[i, j]))])


def assemble_operator(grid: Grid, params: FracParams, far_factor: int = 4) -> OperatorTable:
    """Build the dense operator table.

    Interactions are summed out to ``far_factor * n`` cells; beyond that the
    zero extension makes ``psi`` exactly ``2 u(x) / z^2`` and the remaining
    integral is added analytically to the diagonal.
    """
    if grid.N != params.N:
        raise GridMismatchError("grid and params disagree on N")
    n = grid.n
    if n < MIN_NODES:
        raise AssemblyError(f"grid too coarse for the singular-cell correction: n={n} < {MIN_NODES}")
    a, C, h = params.alpha, params.c_norm, grid.h
    K = far_factor * n
    om = interaction_weights(n, a, C, K)
    col = np.zeros(n)
    col[1:] = -om[: n - 1]
    L = toeplitz(col)
    far = 2.0 * C * (K * h) ** (-2 * a) / (2 * a)
    L[np.diag_indices(n)] = 2.0 * om.sum() + far
    tail = L.sum(axis=1)
    return OperatorTable(grid, params, _frozen(L), _frozen(tail), _frozen(exterior_tail(grid.nodes, params)))


def trace_density_values(measure: RadonMeasure, x: np.ndarray, params: FracParams) -> np.ndarray:
    """``C * int |z - x|^{-1-2a} dmu(z)`` at points ``x`` inside the domain."""
    x = np.asarray(x, dtype=float)
    C, a = params.c_norm, params.alpha
    out = np.zeros_like(x)
    z = measure.points[:, 0]
    for zk, mk in zip(z, measure.masses):
        out += mk * np.abs(zk - x) ** (-1 - 2 * a)
    if measure.density is not None:
        if measure.density_support is None:
            raise ValidationError("exterior-support", "exterior density needs an explicit support interval")
        lo, hi = measure.density_support
        dens = measure.density
        for i, xi in enumerate(x):
            out[i] += integrate.quad(lambda t: float(dens(np.array([t]))[0]) * abs(t - xi) ** (-1 - 2 * a),
                                     lo, hi, limit=200)[0]
    return C * out


def apply_operator(table: OperatorTable, u: GridField) -> GridField:
    """Discrete ``(-Delta)^a u`` at the interior nodes.

    With a :class:`MeasureExtension` exterior rule ``u = r * mu`` outside the
    domain, the exterior enters only through ``-r * w_mu``.
    """
    if u.grid != table.grid:
        raise GridMismatchError("field and operator live on different grids")
    out = table.weights @ u.values
    ext = u.exterior
    if isinstance(ext, MeasureExtension):
        if ext.measure.support != EXTERIOR:
            raise ValidationError("exterior-support", "measure extension must be exterior-supported")
        out = out - ext.weight * trace_density_values(ext.measure, table.grid.nodes, table.params)
    return GridField(table.grid, out)


def _truncated_pieces(u: Callable, x: float, lo: float, hi: float, expo: float,
                      breakpoints: Sequence[float]) -> float:
    ux = float(u(x))

    def integrand(z):
        return (2.0 * ux - float(u(x + z)) - float(u(x - z))) * z ** expo

    cuts = sorted({abs(x - b) for b in breakpoints} | {lo, hi})
    cuts = [c for c in cuts if lo <= c <= hi]
    total = 0.0
    for c0, c1 in zip(cuts[:-1], cuts[1:]):
        if c1 > c0:
            total += integrate.quad(integrand, c0, c1, limit=200, epsabs=1e-13, epsrel=1e-11)[0]
    return total


def apply_truncated(params: FracParams, u: Callable[[float], float], eps: float, x: float,
                    breakpoints: Sequence[float] = (-1.0, 1.0), reach: float = 4.0) -> float:
    """Truncated operator: ``C * int_{|x-y| > eps} (u(x) - u(y)) |x-y|^{-1-2a} dy``.

    ``u`` must be defined on the whole line.  Beyond ``|x - y| > reach`` the
    callback is assumed to vanish, which holds for zero-extended fields; the
    remaining ``2 u(x)`` term is integrated exactly.
    """
    if not eps > 0:
        raise ValidationError("truncation", f"eps must be positive, got {eps}")
    a = params.alpha
    reach = max(reach, 2.0 * eps)
    inner = _truncated_pieces(u, x, eps, reach, -1 - 2 * a, breakpoints)
    far = 2.0 * float(u(x)) * reach ** (-2 * a) / (2 * a)
    return params.c_norm * (inner + far)


def truncated_ball_correction(params: FracParams, u: Callable[[float], float], eps: float, x: float) -> float:
    """Leading Taylor term of the excised ball ``|x - y| < eps``.

    ``-C u''(x) eps^{2-2a} / (2-2a)``, with ``u''`` from a central difference.
    """
    a = params.alpha
    d = eps / 4.0
    upp = (float(u(x + d)) - 2.0 * float(u(x)) + float(u(x - d))) / d ** 2
    return -params.c_norm * upp * eps ** (2 - 2 * a) / (2 - 2 * a)


def truncated_limit(params: FracParams, u: Callable[[float], float], x: float,
                    eps_seq: Sequence[float] = (0.1, 0.05, 0.025),
                    breakpoints: Sequence[float] = (-1.0, 1.0)) -> tuple[float, list[float]]:
    """Limit ``eps -> 0`` of the truncated operator for C^4 functions near ``x``.

    Each truncated value gets the excised-ball Taylor correction, leaving an
    ``O(eps^{4-2a})`` error that one Richardson step removes.  Returns the
    extrapolated value and the raw truncated values along ``eps_seq``.
    """
    raw = [apply_truncated(params, u, e, x, breakpoints) for e in eps_seq]
    fixed = [v + truncated_ball_correction(params, u, e, x) for v, e in zip(raw, eps_seq)]
    r = (eps_seq[-2] / eps_seq[-1]) ** (4 - 2 * params.alpha)
    return fixed[-1] + (fixed[-1] - fixed[-2]) / (r - 1.0), raw


def getoor_constant(alpha: float) -> float:
    """Constant value of the operator applied to ``(1 - x^2)_+^a`` in one dimension."""
    return 2 ** (2 * alpha) * math.gamma(alpha + 1) * math.gamma(0.5 + alpha) / math.gamma(0.5)
