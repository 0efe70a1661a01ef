from __future__ import annotations

import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracgreen.errors import NoRootError, NonConvergenceError, ValidationError
from fracgreen.green import gradient, green_apply, lp_norm
from fracgreen.model import FracParams, Grid, GridField, GrowthSpec, ProblemSpec, RadonMeasure, SolverConfig
from fracgreen.operator import getoor_constant
from fracgreen.solver import (BALL_SLACK, SUBLINEAR, SUPERLINEAR, SmallnessCoeffs, critical_c, estimate_c0,
                              evaluate_F, lambda_star, mollify_atom, mollify_measure, picard_solve, prepare,
                              solve_full, truncate_g)


@pytest.mark.parametrize("regime,p", [(SUPERLINEAR, 1.5), (SUBLINEAR, 0.5)])
@pytest.mark.parametrize("eps_f,sigma_c0", [(0.2, 1.0), (0.0, 2.0), (1.5, 0.0)])
def test_lambda_star_closed_form_without_growth(regime, p, eps_f, sigma_c0):
    k = SmallnessCoeffs(c0=1.7, c=0.0, p=p, eps_f_l1=eps_f, sigma_C0=sigma_c0, grad_p_poisson=0.3)
    expected = 1.7 * (eps_f + sigma_c0)
    assert lambda_star(k, regime) == pytest.approx(expected, rel=1e-10)


def test_lambda_star_trivial_without_data():
    assert lambda_star(SmallnessCoeffs(c0=1.0, c=0.0, p=1.5)) == 0.0


@pytest.mark.parametrize("p", [1.5, 1.2, 0.5])
def test_threshold_separates_root_and_noroot(p):
    k = SmallnessCoeffs(c0=1.5, c=0.01, p=p, eps_f_l1=0.2, sigma_C0=2.0, grad_p_poisson=0.4)
    cmax = critical_c(k)
    assert cmax > 0
    lam = lambda_star(k.with_c(0.99 * cmax))
    assert lam > 0 and abs(evaluate_F(lam, k.with_c(0.99 * cmax))) < 1e-8
    with pytest.raises(NoRootError) as exc:
        lambda_star(k.with_c(1.01 * cmax))
    assert exc.value.c_max == pytest.approx(cmax)


def test_sublinear_threshold_exact():
    k = SmallnessCoeffs(c0=1.8, c=0.1, p=0.5, sigma_C0=1.0)
    assert critical_c(k) == 1.0 / 1.8


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 10), st.floats(0, 0.05), st.floats(1.05, 1.9))
def test_root_is_first_sign_change(lam_probe, c, p):
    k = SmallnessCoeffs(c0=1.2, c=c, p=p, eps_f_l1=0.1, sigma_C0=1.0, grad_p_poisson=0.2)
    try:
        lam = lambda_star(k)
    except NoRootError:
        return
    if lam_probe < 0.999 * lam:
        assert evaluate_F(lam_probe, k) > 0


def test_smallness_rejects_bad_input():
    with pytest.raises(ValidationError):
        SmallnessCoeffs(c0=0.0, c=0.1, p=1.5)
    with pytest.raises(ValidationError):
        evaluate_F(0.0, SmallnessCoeffs(c0=1.0, c=0.1, p=1.5))


def test_c0_is_largest_column_norm(desk_table):
    g = desk_table.grid
    c0 = estimate_c0(desk_table, p=1.5)
    j = int(g.n // 3)
    col = lp_norm(gradient(desk_table.G[:, j], g), g, 1.5)
    assert c0 >= col
    assert estimate_c0(desk_table, p=1.5, probes=[j]) == pytest.approx(col)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.8, 0.8), st.floats(0.02, 0.15), st.floats(0.1, 5))
def test_mollified_atom_keeps_mass(z, r, m):
    g = Grid(256)
    w = mollify_atom(g, z, m, r)
    assert np.all(w >= 0)
    assert g.integrate(w) == pytest.approx(m, rel=1e-12)


def test_clipped_mollifier_warns(caplog):
    g = Grid(64)
    with caplog.at_level(logging.WARNING):
        w = mollify_atom(g, 0.95, 1.0, 0.1)
    assert "clipped" in caplog.text
    assert g.integrate(w) == pytest.approx(1.0)


def test_mollify_measure_radius():
    g = Grid(512)
    nu = RadonMeasure.dirac(0.0, mass=2.0)
    a, b = mollify_measure(nu, 4, g), mollify_measure(nu, 16, g)
    assert g.integrate(a.values) == pytest.approx(2.0) == g.integrate(b.values)
    assert np.count_nonzero(b.values) < np.count_nonzero(a.values)
    with pytest.raises(ValidationError):
        mollify_measure(nu, 0, g)


def test_truncation_caps():
    g = Grid(8)
    gn = truncate_g(GrowthSpec(1.0, 1.5), 3)
    np.testing.assert_allclose(gn(g, np.array([0, 1, 2, 3, 4, 5, 6, 7.0])),
                               np.minimum(np.arange(8.0) ** 1.5, 3.0))


@pytest.mark.parametrize("name", ["desk", "desk_sub"])
def test_desk_solve(request, name):
    spec = request.getfixturevalue(name)
    sol = solve_full(spec)
    assert sol.iterations <= spec.solver.max_iter
    assert sol.residual_history[-1] <= spec.solver.tol
    assert max(sol.grad_lp_history) <= BALL_SLACK * sol.lambda_star
    assert sol.decomposition_defect() == 0.0
    assert np.all(sol.u.values >= -1e-12)
    assert len(sol.diagnostics["level_distances"]) == len(spec.solver.levels) - 1


def test_fixed_point_property(desk, desk_table):
    ctx = prepare(desk, desk_table)
    sol = picard_solve(desk, 64, ctx)
    g = desk.grid
    nu = mollify_measure(desk.nu, 64, g).values
    s = np.abs(gradient(sol.u.values, g))
    rhs = truncate_g(desk.g, 64)(g, s) + desk.sigma * nu
    again = green_apply(desk_table, rhs).values
    v = sol.g_part.values
    assert g.integrate(np.abs(again - v)) / g.integrate(np.abs(v)) < 1e-7


def test_damping_reaches_same_solution(desk, desk_table):
    ctx = prepare(desk, desk_table)
    a = picard_solve(desk, 32, ctx)
    b = picard_solve(desk.with_(solver=SolverConfig(theta=0.5)), 32, ctx)
    assert b.iterations > a.iterations
    np.testing.assert_allclose(b.u.values, a.u.values, rtol=1e-6, atol=1e-8)


def test_torsion_solve_matches_closed_form(torsion_spec):
    sol = solve_full(torsion_spec)
    g, a = torsion_spec.grid, torsion_spec.params.alpha
    exact = (1 - g.nodes ** 2) ** a / getoor_constant(a)
    assert np.max(np.abs(sol.u.values - exact)) / exact.max() < 1e-2


def test_nonconvergence_raised(desk, desk_table):
    ctx = prepare(desk, desk_table)
    with pytest.raises(NonConvergenceError):
        picard_solve(desk.with_(solver=SolverConfig(max_iter=2)), 32, ctx)


def test_noroot_for_large_growth(desk, desk_table):
    with pytest.raises(NoRootError) as exc:
        prepare(desk.with_(g=GrowthSpec(5.0, 1.5, 0.1, 1.0)), desk_table)
    assert 0 < exc.value.c_max < 5.0
