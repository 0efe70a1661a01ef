"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""

from __future__ import annotations

import time

import numpy as np
import pytest

from conftest import FIXDIR, FIXDIR_NAMES, load_fixture, record_criterion
from fracgreen import cli
from fracgreen.analysis import (ComparisonConfig, StabilityConfig, SweepConfig, TestBattery, comparison_experiment,
                                critical_sweep, stability_experiment, weak_residual)
from fracgreen.boundary import fractional_normal_test, solve_concentrated
from fracgreen.errors import NoRootError
from fracgreen.green import EXPLICIT, NUMERIC_INVERSE, build_green, poisson_apply
from fracgreen.model import FracParams, Grid, GridField, GrowthSpec, ProblemSpec, RadonMeasure
from fracgreen.operator import apply_operator, assemble_operator, getoor_constant, truncated_limit
from fracgreen.solver import SUPERLINEAR, critical_c, lambda_star, prepare, solve_full

ALPHAS = (0.6, 0.75, 0.9)


def test_criterion_01_operator_getoor():
    t0 = time.perf_counter()
    lines, ok = [], True
    for a in ALPHAS:
        p = FracParams(1, a)
        profile = lambda x, a=a: np.clip(1 - np.asarray(x) ** 2, 0, None) ** a  # noqa: E731
        oracle, _ = truncated_limit(p, lambda y: float(profile(y)), 0.3, eps_seq=(0.02, 0.01, 0.005))
        ok &= abs(oracle / getoor_constant(a) - 1) < 1e-5
        errs = []
        for n in (64, 128, 256, 512):
            g = Grid(n)
            lu = apply_operator(assemble_operator(g, p), GridField.from_callable(g, profile)).values
            m = np.abs(g.nodes) <= 0.9
            errs.append(float(np.max(np.abs(lu[m] - oracle)) / oracle))
        mono = all(b < a_ for a_, b in zip(errs, errs[1:]))
        ok &= mono and errs[-1] < 0.02
        lines.append(f"a={a} err={['%.2e' % e for e in errs]}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30
    record_criterion(1, "operator vs Getoor constant", ok, f"{'; '.join(lines)}; {elapsed:.1f}s")
    assert ok


def test_criterion_02_green_dual_route():
    ok, parts = True, []
    for a in ALPHAS:
        p, g = FracParams(1, a), Grid(512)
        ex, num = build_green(g, p, EXPLICIT), build_green(g, p, NUMERIC_INVERSE)
        off = ~np.eye(g.n, dtype=bool)
        rel = float(np.linalg.norm((ex.G - num.G)[off]) / np.linalg.norm(ex.G[off]))
        sym = max(ex.symmetry_defect(), num.symmetry_defect())
        pos = bool(np.all(ex.G > 0) and np.all(num.G > 0))
        ok &= rel < 0.02 and sym <= 1e-10 and pos
        parts.append(f"a={a} rel={rel:.2e} sym={sym:.1e} pos={pos}")
    record_criterion(2, "Green explicit vs numeric inverse", ok, "; ".join(parts))
    assert ok


def test_criterion_03_poisson_identity():
    ok, parts = True, []
    for a in ALPHAS:
        p, g = FracParams(1, a), Grid(512)
        table = build_green(g, p, EXPLICIT)
        battery = TestBattery.build(g, p)
        worst_disc = worst_dual = 0.0
        for z in (1.5, 2.0, -1.6, 3.0):
            mu = RadonMeasure.dirac(z, support="exterior")
            rep: dict = {}
            P = poisson_apply(mu, table, p, tol=np.inf, report=rep)
            spec = ProblemSpec(p, g, GrowthSpec(0.0, 1.0), rho=1.0, mu=mu)
            worst_disc = max(worst_disc, rep["poisson_discrepancy"])
            worst_dual = max(worst_dual, weak_residual(P, spec, battery))
        ok &= worst_disc <= 0.02 and worst_dual <= 1e-3
        parts.append(f"a={a} routes={worst_disc:.2e} duality={worst_dual:.2e}")
    record_criterion(3, "Poisson routes and duality", ok, "; ".join(parts))
    assert ok


@pytest.mark.parametrize("name", ["superlinear_desk", "sublinear_desk"])
def test_criterion_04_nonlinear_solve(name):
    spec = load_fixture(name)
    t0 = time.perf_counter()
    sol = solve_full(spec)
    elapsed = time.perf_counter() - t0
    its = sol.diagnostics["iterations_per_level"]
    radius = 1.05 * sol.lambda_star
    res = weak_residual(sol, spec, TestBattery.build(spec.grid, spec.params))
    ok = (max(its) <= 100 and sol.residual_history[-1] <= 1e-8 and max(sol.grad_lp_history) <= radius
          and res <= 5e-3 and elapsed < 60)
    record_criterion(4, f"nonlinear solve ({name})", ok,
                     f"iterations/level={its} max|grad|={max(sol.grad_lp_history):.3f} "
                     f"ball={radius:.3f} residual={res:.2e} {elapsed:.2f}s")
    assert ok


def test_criterion_05_smallness_boundary():
    ok, parts = True, []
    for name in ("superlinear_desk", "sublinear_desk"):
        spec = load_fixture(name)
        k = prepare(spec).coeffs
        cmax = critical_c(k)
        below = lambda_star(k.with_c(0.99 * cmax))
        try:
            lambda_star(k.with_c(1.01 * cmax))
            noroot = False
        except NoRootError:
            noroot = True
        k0 = k.with_c(0.0)
        closed = k0.c0 * (k0.eps_f_l1 + k0.sigma_C0)
        err = abs(lambda_star(k0) / closed - 1)
        ok &= noroot and below > 0 and err <= 1e-10
        parts.append(f"{name}: c_max={cmax:.5g} root_below={below:.4g} noroot_above={noroot} c0-form err={err:.1e}")
    record_criterion(5, "smallness threshold", ok, "; ".join(parts))
    assert ok


def test_criterion_06_comparison_uniqueness():
    spec = load_fixture("superlinear_desk")
    rep = comparison_experiment(ComparisonConfig(spec, tol=1e-6))
    ok = rep.passed
    record_criterion(6, "comparison and uniqueness", ok,
                     f"ordering violation={rep.ordering_violation:.1e} sigma violation={rep.sigma_violation:.1e} "
                     f"two-start gap={rep.uniqueness_gap:.1e}")
    assert ok


def test_criterion_07_stability():
    spec = load_fixture("superlinear_desk")
    rep = stability_experiment(StabilityConfig(spec, schedule=(4, 8, 16, 32), reference_level=64))
    ok = rep.eventually_decreasing and rep.final <= 5 * spec.solver.tol
    record_criterion(7, "stability along mollification", ok,
                     f"W1p distances={['%.3e' % d for d in rep.distances]} "
                     f"relative={['%.3f' % r for r in rep.relative]} decreasing={rep.eventually_decreasing} "
                     f"final={rep.final:.2e} vs 5*tol={5 * spec.solver.tol:.0e}")
    assert ok


def test_criterion_08_critical_exponent():
    t = critical_sweep(SweepConfig(alpha=0.75))
    q_in, q_out = 0.8 * t.p_star, 1.1 * t.p_star
    v_in, v_out = t.verdicts[q_in]["w1q"], t.verdicts[q_out]["weighted"]
    ok = v_in == "stable" and v_out == "growing"
    record_criterion(8, "critical exponent sweep (a=0.75)", ok,
                     f"0.8p* ratios={['%.3f' % r for r in t.ratios(q_in)]} -> {v_in}; "
                     f"1.1p* weighted ratios={['%.3f' % r for r in t.ratios(q_out, 'weighted')]} -> {v_out}")
    assert ok


def test_criterion_09_boundary_concentration():
    p = FracParams(1, 0.75)
    spec = ProblemSpec(p, Grid(1024), GrowthSpec(0.0, 1.0))
    eta = RadonMeasure.dirac(1.0, support="boundary")
    _, rep = solve_concentrated(eta, spec, (0.2, 0.1, 0.05, 0.025))
    normals = {}
    for a in ALPHAS:
        lim = fractional_normal_test(lambda y, a=a: np.clip(1 - np.asarray(y) ** 2, 0, None) ** a, 1.0,
                                     FracParams(1, a))
        normals[a] = abs(lim.value / 2 ** a - 1) if lim.converged else np.inf
    ok = rep.cauchy_decreasing and rep.bounded[1.0] and max(normals.values()) <= 0.01
    record_criterion(9, "boundary concentration", ok,
                     f"L1 Cauchy={['%.4f' % c for c in rep.cauchy_l1]} decreasing={rep.cauchy_decreasing}; "
                     f"W11={['%.3f' % v for v in rep.w1q[1.0]]} bounded={rep.bounded[1.0]}; "
                     f"normal-derivative rel err={max(normals.values()):.1e}")
    assert ok


def test_criterion_10_determinism_and_verify(tmp_path):
    fixture = str(FIXDIR / "superlinear_desk.json")
    runs = {"solve": [], "sweep": [], "stability": []}
    for k in range(2):
        out = tmp_path / f"run{k}"
        for cmd in runs:
            code = cli.main([cmd, "--spec", fixture, "--out", str(out), "--seed", "11"])
            runs[cmd].append(code)
    files = ["solution.csv", "diagnostics.json", "sweep.csv", "stability.csv", "stability.json"]
    identical = all((tmp_path / "run0" / f).read_bytes() == (tmp_path / "run1" / f).read_bytes() for f in files)
    codes = {}
    for name in FIXDIR_NAMES:
        codes[name] = cli.main(["verify", "--spec", str(FIXDIR / name), "--out", str(tmp_path / name), "--seed", "11"])
    ok = identical and all(c == 0 for c in codes.values()) and all(c == [0, 0] for c in runs.values())
    record_criterion(10, "determinism and verify", ok, f"byte-identical={identical} verify exits={codes}")
    assert ok

