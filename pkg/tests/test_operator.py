from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracgreen.errors import AssemblyError, GridMismatchError, ValidationError
from fracgreen.model import FracParams, Grid, GridField, MeasureExtension, RadonMeasure
from fracgreen.operator import (apply_operator, apply_truncated, assemble_operator, getoor_constant,
                                trace_density_values, truncated_limit)

FROZEN_GETOOR = {0.6: 1.1018024908797124, 0.75: 1.329340388179138, 0.9: 1.6764907877644373}


def _profile(alpha):
    return lambda x: np.clip(1.0 - np.asarray(x) ** 2, 0.0, None) ** alpha


def _bump(x):
    t = 2.0 * np.asarray(x, dtype=float)
    out = np.zeros(np.shape(t))
    m = np.abs(t) < 1
    out[m] = np.exp(-1.0 / (1.0 - t[m] ** 2))
    return out


@pytest.mark.parametrize("alpha", sorted(FROZEN_GETOOR))
def test_getoor_constant_frozen(alpha):
    assert getoor_constant(alpha) == pytest.approx(FROZEN_GETOOR[alpha], rel=1e-14)


def test_getoor_constant_half_order():
    assert getoor_constant(0.5) == pytest.approx(1.0)


@pytest.mark.parametrize("alpha", [0.6, 0.75, 0.9])
def test_truncated_oracle_reproduces_getoor(alpha):
    p = FracParams(1, alpha)
    val, raw = truncated_limit(p, lambda y: float(_profile(alpha)(y)), 0.3, eps_seq=(0.02, 0.01, 0.005))
    assert val == pytest.approx(getoor_constant(alpha), rel=1e-5)
    assert abs(raw[2] - raw[1]) < abs(raw[1] - raw[0])


@settings(max_examples=25, deadline=None)
@given(st.floats(0.55, 0.95), st.integers(8, 80))
def test_operator_is_symmetric_m_matrix(alpha, n):
    t = assemble_operator(Grid(n), FracParams(1, alpha))
    L = t.weights
    np.testing.assert_array_equal(L, L.T)
    off = L[~np.eye(n, dtype=bool)]
    assert np.all(off < 0)
    assert np.all(t.tail > 0)
    np.testing.assert_allclose(t.tail, L.sum(axis=1))
    # Toeplitz
    for k in range(n):
        assert np.ptp(np.diag(L, k)) <= 1e-12 * abs(L[0, 0])


@pytest.mark.parametrize("alpha", [0.6, 0.75, 0.9])
def test_getoor_error_shrinks(alpha):
    p = FracParams(1, alpha)
    errs = []
    for n in (64, 128, 256):
        g = Grid(n)
        lu = apply_operator(assemble_operator(g, p), GridField.from_callable(g, _profile(alpha))).values
        m = np.abs(g.nodes) <= 0.9
        errs.append(np.max(np.abs(lu[m] - getoor_constant(alpha))) / getoor_constant(alpha))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.02


@pytest.mark.parametrize("alpha", [0.6, 0.75])
def test_smooth_bump_against_truncated_oracle(alpha):
    p, g = FracParams(1, alpha), Grid(256)
    lu = apply_operator(assemble_operator(g, p), GridField.from_callable(g, _bump)).values
    f = lambda y: float(_bump(np.array([y]))[0])  # noqa: E731
    idx = np.arange(0, g.n, 16)
    ref = np.array([truncated_limit(p, f, g.nodes[i], eps_seq=(g.h, g.h / 2, g.h / 4),
                                    breakpoints=(-1.0, -0.5, 0.5, 1.0))[0] for i in idx])
    assert np.max(np.abs(lu[idx] - ref)) / np.max(np.abs(ref)) < 1e-3


def test_tail_approaches_exterior_integral():
    p = FracParams(1, 0.75)
    gaps = []
    for n in (64, 256):
        t = assemble_operator(Grid(n), p)
        m = np.abs(t.grid.nodes) <= 0.5
        gaps.append(np.max(np.abs(t.tail[m] - t.analytic_tail[m]) / t.analytic_tail[m]))
    assert gaps[1] < gaps[0]


def test_exterior_measure_enters_as_trace():
    p, g = FracParams(1, 0.75), Grid(32)
    t = assemble_operator(g, p)
    mu = RadonMeasure.dirac(2.0, mass=3.0, support="exterior")
    out = apply_operator(t, GridField(g, np.zeros(g.n), MeasureExtension(mu, 0.5))).values
    expected = -0.5 * 3.0 * p.c_norm * np.abs(2.0 - g.nodes) ** (-2.5)
    np.testing.assert_allclose(out, expected, rtol=1e-13)
    np.testing.assert_allclose(trace_density_values(mu, g.nodes, p), -expected / 0.5, rtol=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-5, 5))
def test_operator_is_linear(seed, s):
    rng = np.random.default_rng(seed)
    g = Grid(16)
    t = assemble_operator(g, FracParams(1, 0.7))
    a, b = GridField(g, rng.normal(size=16)), GridField(g, rng.normal(size=16))
    lhs = apply_operator(t, a * s + b).values
    rhs = s * apply_operator(t, a).values + apply_operator(t, b).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + abs(s)) * np.abs(t.weights).max())


def test_operator_errors():
    p = FracParams(1, 0.75)
    with pytest.raises(AssemblyError):
        assemble_operator(Grid(5), p)
    t = assemble_operator(Grid(16), p)
    with pytest.raises(GridMismatchError):
        apply_operator(t, GridField.zeros(Grid(17)))
    with pytest.raises(ValidationError):
        apply_truncated(p, lambda y: 0.0, 0.0, 0.1)
