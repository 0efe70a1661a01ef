"""Domain types, parameter validation and the normalization constant.

Everything here is immutable after construction; arrays are frozen
read-only so tables and fields can be shared between workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate
from scipy.special import gamma

from .errors import GridMismatchError, ValidationError

INTERIOR = "interior"
EXTERIOR = "exterior"
BOUNDARY = "boundary"
SUPPORTS = (INTERIOR, EXTERIOR, BOUNDARY)


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


# --------------------------------------------------------------------------
# constants
# --------------------------------------------------------------------------

def normalization_constant(N: int, alpha: float) -> float:
    r"""Constant :math:`C_{N,\alpha}` of the singular-integral fractional Laplacian.

    Closed form :math:`2^{2\alpha}\Gamma(N/2+\alpha) / (\pi^{N/2}|\Gamma(-\alpha)|)`,
    valid for ``0 < alpha < 1``.
    """
    if N not in (1, 2):
        raise ValidationError("dimension", f"N must be 1 or 2, got {N}")
    if not 0.0 < alpha < 1.0:
        raise ValidationError("order", f"alpha must lie in (0, 1), got {alpha}")
    return float(2.0 ** (2 * alpha) * gamma(N / 2 + alpha)
                 / (math.pi ** (N / 2) * abs(gamma(-alpha))))


def _one_minus_cos_integral(alpha: float) -> float:
    """2 * int_0^inf (1 - cos t) t^{-1-2 alpha} dt by three quadratures."""
    # (1 - cos t) / t^2 = 2 sin^2(t/2) / t^2 is smooth at 0; t^{1-2a} goes into the weight
    near = integrate.quad(lambda t: 2.0 * (math.sin(t / 2) / t) ** 2 if t > 0 else 0.5,
                          0.0, 1.0, weight="alg", wvar=(1 - 2 * alpha, 0.0), limit=200)[0]
    smooth = 1.0 / (2 * alpha)
    osc = integrate.quad(lambda t: t ** (-1 - 2 * alpha), 1.0, np.inf, weight="cos", wvar=1.0,
                         limlst=200)[0]
    return 2.0 * (near + smooth - osc)


def fourier_normalization_constant(N: int, alpha: float) -> float:
    r"""Same constant by quadrature of :math:`\int (1-\cos\xi_1)|\xi|^{-N-2\alpha}\,d\xi`.

    For ``N = 2`` the transverse variable is integrated first: with
    ``xi_2 = xi_1 tan(theta)`` it contributes ``|xi_1|^{-1-2 alpha}`` times an
    angular quadrature, leaving the same one-dimensional oscillatory integral.
    Neither route touches the Gamma-function identity.
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError("order", f"alpha must lie in (0, 1), got {alpha}")
    if N == 1:
        return 1.0 / _one_minus_cos_integral(alpha)
    if N == 2:
        angular = 2.0 * integrate.quad(lambda th: math.cos(th) ** (2 * alpha), 0.0, math.pi / 2,
                                       epsabs=0.0, epsrel=1e-13)[0]
        return 1.0 / (angular * _one_minus_cos_integral(alpha))
    raise ValidationError("dimension", f"N must be 1 or 2, got {N}")


def critical_exponent(N: int, alpha: float) -> float:
    """Gradient-growth threshold ``N / (N - (2 alpha - 1))``."""
    return N / (N - (2 * alpha - 1))


# --------------------------------------------------------------------------
# parameters and grids
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FracParams:
    """Dimension, order and operator normalization."""

    N: int
    alpha: float
    c_norm: float = field(default=float("nan"))

    def __post_init__(self):
        if self.N not in (1, 2):
            raise ValidationError("dimension", f"N must be 1 or 2, got {self.N}")
        if not 0.5 < self.alpha < 1.0:
            raise ValidationError("order", f"alpha must lie in (1/2, 1), got {self.alpha}")
        exact = normalization_constant(self.N, self.alpha)
        if math.isnan(self.c_norm):
            object.__setattr__(self, "c_norm", exact)
        elif not abs(self.c_norm - exact) <= 1e-10 * exact:
            raise ValidationError("normalization", f"c_norm={self.c_norm} differs from C_N,alpha={exact}")

    @property
    def p_star(self) -> float:
        return critical_exponent(self.N, self.alpha)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform node set strictly inside the unit interval ``(-1, 1)``.

    Nodes are ``x_i = -1 + i h`` for ``i = 1..n`` with ``h = 2/(n+1)``, so the
    boundary points are the (absent) nodes ``i = 0`` and ``i = n+1``.
    """

    n: int
    N: int = 1

    def __post_init__(self):
        if self.N != 1:
            raise NotImplementedError("only the interval (N = 1) is discretized")
        if self.n < 3:
            raise ValidationError("grid", f"need at least 3 nodes, got {self.n}")
        h = 2.0 / (self.n + 1)
        x = -1.0 + h * np.arange(1, self.n + 1)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "nodes", _frozen(x))
        object.__setattr__(self, "dist", _frozen(1.0 - np.abs(x)))

    h: float = field(init=False, repr=False)
    nodes: np.ndarray = field(init=False, repr=False)
    dist: np.ndarray = field(init=False, repr=False)

    def __eq__(self, other):
        return isinstance(other, Grid) and (self.n, self.N) == (other.n, other.N)

    def __hash__(self):
        return hash((self.n, self.N))

    @property
    def x(self) -> np.ndarray:
        return self.nodes

    @property
    def volume(self) -> float:
        """Lebesgue measure of the domain."""
        return 2.0

    def integrate(self, values) -> float:
        # rectangle rule; boundary values are zero so this is the trapezoidal rule too
        return float(self.h * np.sum(values))

    def nearest(self, point: float) -> int:
        i = int(round((point + 1.0) / self.h)) - 1
        return min(max(i, 0), self.n - 1)


# --------------------------------------------------------------------------
# fields and measures
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureExtension:
    """Exterior rule ``u = weight * measure`` on the complement of the domain."""

    measure: "RadonMeasure"
    weight: float = 1.0


ZERO = "zero"


@dataclass(frozen=True, eq=False)
class GridField:
    grid: Grid
    values: np.ndarray
    exterior: Union[str, MeasureExtension] = ZERO

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise GridMismatchError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("finite", "field values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "GridField":
        return cls(grid, np.broadcast_to(np.asarray(fn(grid.nodes), dtype=float), (grid.n,)))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridField":
        return cls(grid, np.zeros(grid.n))

    def _check(self, other: "GridField"):
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, GridField):
            self._check(other)
            return GridField(self.grid, self.values + other.values)
        return GridField(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, GridField):
            self._check(other)
            return GridField(self.grid, self.values - other.values)
        return GridField(self.grid, self.values - other)

    def __mul__(self, s):
        return GridField(self.grid, self.values * s)

    __rmul__ = __mul__

    def __neg__(self):
        return GridField(self.grid, -self.values)

    def __len__(self):
        return self.grid.n


Density = Union[GridField, Callable[[np.ndarray], np.ndarray], None]


@dataclass(frozen=True, eq=False)
class RadonMeasure:
    """Nonnegative measure made of atoms plus an optional density.

    Parameters
    ----------
    points, masses
        Atom locations (shape ``(k, N)``; a flat sequence is read as ``N = 1``)
        and their masses.
    density
        Absolutely continuous part: a :class:`GridField` (interior only) or a
        callable evaluated on ``density_support``.
    support
        One of ``"interior"``, ``"exterior"``, ``"boundary"``.
    separation
        For exterior measures, the declared gap between the support and the
        closed unit ball.
    density_support
        Interval ``(a, b)`` carrying a callable density.  Defaults to the
        domain for interior measures.
    """

    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    masses: np.ndarray = field(default_factory=lambda: np.zeros(0))
    density: Density = None
    support: str = INTERIOR
    separation: float = 0.05
    density_support: Optional[tuple] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        m = np.asarray(self.masses, dtype=float).reshape(-1)
        if pts.shape[0] != m.shape[0]:
            raise ValidationError("measure", "points and masses differ in length")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "masses", _frozen(m))
        if self.support not in SUPPORTS:
            raise ValidationError("measure", f"unknown support tag {self.support!r}")
        if self.density_support is None and self.density is not None and self.support == INTERIOR:
            object.__setattr__(self, "density_support", (-1.0, 1.0))
        if self.density_support is not None:
            object.__setattr__(self, "density_support", tuple(float(v) for v in self.density_support))

    # constructors -----------------------------------------------------
    @classmethod
    def dirac(cls, point, mass: float = 1.0, support: str = INTERIOR, **kw) -> "RadonMeasure":
        return cls(points=np.atleast_1d(np.asarray(point, dtype=float)).reshape(1, -1),
                   masses=[mass], support=support, **kw)

    @classmethod
    def empty(cls, support: str = INTERIOR) -> "RadonMeasure":
        return cls(support=support)

    # queries -----------------------------------------------------------
    @property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)

    @property
    def atom_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def is_zero(self) -> bool:
        return self.density is None and not np.any(self.masses > 0)

    def density_values(self, grid: Grid) -> np.ndarray:
        """Density sampled at the grid nodes (zero outside ``density_support``)."""
        if self.density is None:
            return np.zeros(grid.n)
        if isinstance(self.density, GridField):
            if self.density.grid != grid:
                raise GridMismatchError("density lives on another grid")
            return np.array(self.density.values)
        a, b = self.density_support
        x = grid.nodes
        inside = (x >= a) & (x <= b)
        out = np.zeros(grid.n)
        out[inside] = np.asarray(self.density(x[inside]), dtype=float)
        return out

    def density_mass(self, grid: Grid | None = None) -> float:
        if self.density is None:
            return 0.0
        if isinstance(self.density, GridField):
            return self.density.grid.integrate(self.density.values)
        a, b = self.density_support
        return float(integrate.quad(lambda t: float(self.density(np.array([t]))[0]), a, b, limit=200)[0])

    def total_mass(self, grid: Grid | None = None) -> float:
        return self.atom_mass + self.density_mass(grid)

    def scaled(self, s: float) -> "RadonMeasure":
        dens = self.density
        if isinstance(dens, GridField):
            dens = dens * s
        elif dens is not None:
            f = dens
            dens = lambda x, f=f: s * np.asarray(f(x))  # noqa: E731
        return replace(self, masses=self.masses * s, density=dens)


# --------------------------------------------------------------------------
# problem description
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GrowthSpec:
    """Saturating growth ``g(x, s) = c s^p + eps |f(x)|``.

    ``f`` is a constant, a :class:`GridField` or a callable of ``x``.
    A custom ``g`` callback ``g(x, s)`` may be supplied; it must obey the
    bound with the declared ``(c, p, eps, f)`` and is checked on sampling.
    """

    c: float
    p: float
    eps: float = 0.0
    f: Union[float, GridField, Callable[[np.ndarray], np.ndarray]] = 0.0
    g: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def f_values(self, grid: Grid) -> np.ndarray:
        if isinstance(self.f, GridField):
            if self.f.grid != grid:
                raise GridMismatchError("f lives on another grid")
            return np.array(self.f.values)
        if callable(self.f):
            return np.broadcast_to(np.asarray(self.f(grid.nodes), dtype=float), (grid.n,)).copy()
        return np.full(grid.n, float(self.f))

    def f_l1(self, grid: Grid) -> float:
        return grid.integrate(np.abs(self.f_values(grid)))

    def bound(self, grid: Grid, s: np.ndarray) -> np.ndarray:
        return self.c * np.abs(s) ** self.p + self.eps * np.abs(self.f_values(grid))

    def evaluate(self, grid: Grid, s: np.ndarray) -> np.ndarray:
        """g at the grid nodes for gradient moduli ``s``."""
        if self.g is None:
            return self.bound(grid, s)
        return np.asarray(self.g(grid.nodes, np.abs(s)), dtype=float)

    @property
    def is_zero(self) -> bool:
        return self.g is None and self.c == 0.0 and (self.eps == 0.0 or
                                                     (not callable(self.f) and not isinstance(self.f, GridField)
                                                      and float(self.f) == 0.0))


@dataclass(frozen=True)
class SolverConfig:
    """Picard and level-schedule settings.

    ``tol`` is the relative L1 stopping threshold of one Picard run;
    ``level_tol`` is the relative W^{1,p} distance at which successive
    approximation levels are declared converged.
    """

    tol: float = 1e-8
    max_iter: int = 100
    theta: float = 1.0
    level_tol: float = 1e-2
    levels: tuple = (16, 32, 64)
    mollifier_radius: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.theta <= 1.0):
            raise ValidationError("solver", f"damping theta must lie in (0, 1], got {self.theta}")
        if self.tol <= 0 or self.level_tol <= 0:
            raise ValidationError("solver", "tolerances must be positive")
        if self.max_iter < 1:
            raise ValidationError("solver", "max_iter must be >= 1")
        if len(self.levels) < 1 or any(int(n) < 1 for n in self.levels):
            raise ValidationError("solver", "levels must be positive integers")
        object.__setattr__(self, "levels", tuple(int(n) for n in self.levels))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    params: FracParams
    grid: Grid
    g: GrowthSpec
    sigma: float = 0.0
    rho: float = 0.0
    nu: RadonMeasure = field(default_factory=lambda: RadonMeasure.empty(INTERIOR))
    mu: RadonMeasure = field(default_factory=lambda: RadonMeasure.empty(EXTERIOR))
    eta: Optional[RadonMeasure] = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    @property
    def p_star(self) -> float:
        return self.params.p_star

    @property
    def sublinear(self) -> bool:
        return self.g.p <= 1.0

    def with_(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Solution:
    u: GridField
    g_part: GridField
    p_part: GridField
    eta_part: Optional[GridField] = None
    iterations: int = 0
    residual_history: Sequence[float] = ()
    lambda_star: float = float("nan")
    grad_lp_history: Sequence[float] = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.u.grid

    def decomposition_defect(self) -> float:
        total = self.g_part.values + self.p_part.values
        if self.eta_part is not None:
            total = total + self.eta_part.values
        return float(np.max(np.abs(self.u.values - total)))


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

def _check_measure(m: RadonMeasure, tag: str, name: str):
    if m.support != tag:
        raise ValidationError(f"{tag}-support", f"{name} must be tagged {tag!r}, got {m.support!r}")
    if np.any(m.masses < 0):
        raise ValidationError("nonnegative-mass", f"{name} has negative atom masses")
    r = m.radii
    if tag == INTERIOR and np.any(r >= 1.0):
        raise ValidationError("interior-support", f"{name} has atoms outside the open domain")
    if tag == EXTERIOR:
        if m.separation <= 0:
            raise ValidationError("exterior-support", f"{name} needs a positive separation")
        if np.any(r <= 1.0 + m.separation):
            raise ValidationError("exterior-support",
                                  f"{name} has atoms within {m.separation} of the closed domain "
                                  f"(radii {r[r <= 1.0 + m.separation].tolist()})")
        if m.density is not None:
            a, b = m.density_support
            if not (a >= 1.0 + m.separation or b <= -1.0 - m.separation):
                raise ValidationError("exterior-support", f"{name} density overlaps the closed domain")
        if not np.isfinite(m.atom_mass):
            raise ValidationError("finite-mass", f"{name} has infinite mass")
    if tag == BOUNDARY:
        if m.density is not None:
            raise ValidationError("boundary-support", f"{name}: boundary measures are atomic")
        if not np.allclose(r, 1.0, rtol=0, atol=1e-14):
            raise ValidationError("boundary-support", f"{name} has atoms off the unit sphere")


def validate_problem(spec: ProblemSpec) -> ProblemSpec:
    """Check every standing assumption; return the spec unchanged on success."""
    a = spec.params.alpha
    if not 0.5 < a < 1.0:
        raise ValidationError("order", f"alpha must lie in (1/2, 1), got {a}")
    if spec.grid.N != spec.params.N:
        raise ValidationError("dimension", "grid and params disagree on N")
    g = spec.g
    pstar = spec.p_star
    if g.c < 0 or g.eps < 0:
        raise ValidationError("growth", "c and eps must be nonnegative")
    if not 0.0 < g.p < pstar:
        raise ValidationError("subcritical", f"p={g.p} must satisfy 0 < p < p* = {pstar:.6g}")
    f = g.f_values(spec.grid)
    if not np.all(np.isfinite(f)):
        raise ValidationError("growth", "f must be finite")
    if g.g is not None:
        s = np.linspace(0.0, 50.0, 11)
        for sv in s:
            val = g.evaluate(spec.grid, np.full(spec.grid.n, sv))
            if np.any(val < -1e-14) or np.any(val > g.bound(spec.grid, np.full(spec.grid.n, sv)) * (1 + 1e-12) + 1e-14):
                raise ValidationError("growth", f"custom g violates 0 <= g <= c s^p + eps|f| at s={sv}")
    if spec.sigma < 0 or spec.rho < 0:
        raise ValidationError("weights", "sigma and rho must be nonnegative")
    _check_measure(spec.nu, INTERIOR, "nu")
    if spec.nu.density is not None and np.any(spec.nu.density_values(spec.grid) < 0):
        raise ValidationError("nonnegative-mass", "nu density is negative somewhere")
    _check_measure(spec.mu, EXTERIOR, "mu")
    if spec.eta is not None:
        _check_measure(spec.eta, BOUNDARY, "eta")
    return spec
