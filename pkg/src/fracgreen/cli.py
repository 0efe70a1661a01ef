"""Command-line front end.

``fracgreen <solve|verify|sweep|boundary|stability> --spec FILE --out DIR [--seed K] [--set key=value ...]``

Exit codes: 0 success, 2 bad spec or invalid data, 3 smallness condition
has no root, 4 non-convergence, 5 verification failure.

``--set`` edits the JSON document before it is parsed (``g.c=0.1``,
``grid.n=256``).  Keys under ``run.`` are command options instead:
``run.schedule`` (boundary levels or stability mollification indices),
``run.reference_level``, ``run.ns`` and ``run.factors`` (sweep).
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .analysis import (ComparisonConfig, StabilityConfig, SweepConfig, TestBattery, comparison_experiment,
                       critical_sweep, stability_experiment, weak_residual)
from .boundary import lift_measure, lifted_density, solve_concentrated
from .errors import FracGreenError, InconsistencyError, NoRootError, NonConvergenceError, ValidationError
from .green import build_green, green_apply
from .model import ProblemSpec, Solution
from .operator import getoor_constant
from .solver import prepare, solve_full

EXIT_OK, EXIT_SPEC, EXIT_NOROOT, EXIT_NONCONV, EXIT_VERIFY = 0, 2, 3, 4, 5
COMMANDS = ("solve", "verify", "sweep", "boundary", "stability")
BOUNDARY_SCHEDULE = (0.2, 0.1, 0.05, 0.025)
RESIDUAL_GATE = 5e-3
TORSION_GATE = 1e-2

log = logging.getLogger("fracgreen")


@dataclass
class RunManifest:
    command: str
    spec_path: Path
    out_dir: Path
    seed: int = 0
    overrides: list = field(default_factory=list)


class VerificationFailure(FracGreenError):
    pass


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _split_overrides(overrides: Sequence[str]) -> tuple[list[str], dict]:
    spec_items, run_opts = [], {}
    for item in overrides:
        if item.startswith("run."):
            opt = io.apply_overrides({}, [item[4:]])
            run_opts.update(opt)
        else:
            spec_items.append(item)
    return spec_items, run_opts


def load_problem(manifest: RunManifest) -> tuple[ProblemSpec, dict]:
    doc = io.load_document(manifest.spec_path)
    spec_items, run_opts = _split_overrides(manifest.overrides)
    doc = io.apply_overrides(doc, spec_items)
    return io.spec_from_dict(doc, base=manifest.spec_path.parent), run_opts


def _csv_text(header: Sequence[str], rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, (int, str)) else repr(float(v)) for v in r])
    return buf.getvalue()


def solution_csv(sol: Solution) -> str:
    grid = sol.u.grid
    eta = sol.eta_part.values if sol.eta_part is not None else np.zeros(grid.n)
    rows = zip(grid.nodes, sol.u.values, sol.g_part.values, sol.p_part.values, eta)
    return _csv_text(["x", "u", "g_part", "p_part", "eta_part"], rows)


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def solve_problem(spec: ProblemSpec) -> Solution:
    """Full solve; a boundary datum enters through its lift at the finest default level."""
    if spec.eta is None:
        return solve_full(spec)
    t = BOUNDARY_SCHEDULE[-1]
    table = build_green(spec.grid, spec.params)
    shift = green_apply(table, lifted_density(lift_measure(spec.eta, t, spec.params), spec.grid))
    sol = solve_full(spec.with_(eta=None), ctx=prepare(spec.with_(eta=None), table, shift=shift))
    sol.diagnostics["eta_lift_t"] = t
    return sol


def _diagnostics(sol: Solution) -> dict:
    d = {k: v for k, v in sol.diagnostics.items() if isinstance(v, (int, float, str, bool, list, tuple, dict))}
    d.update(iterations=sol.iterations, residual_history=list(sol.residual_history),
             lambda_star=sol.lambda_star, grad_lp_history=list(sol.grad_lp_history),
             decomposition_defect=sol.decomposition_defect())
    return d


def _is_torsion(spec: ProblemSpec) -> bool:
    g = spec.g
    return (g.c == 0 and g.g is None and isinstance(g.f, float) and spec.sigma == 0 and spec.rho == 0
            and spec.eta is None)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_solve(spec: ProblemSpec, m: RunManifest, opts: dict) -> int:
    sol = solve_problem(spec)
    _write(m.out_dir / "solution.csv", solution_csv(sol))
    _write(m.out_dir / "diagnostics.json", io.dumps(_diagnostics(sol)))
    print(f"solved: {sol.iterations} iterations at the last level, lambda* = {sol.lambda_star:.6g}")
    return EXIT_OK


def cmd_verify(spec: ProblemSpec, m: RunManifest, opts: dict) -> int:
    sol = solve_problem(spec)
    grid = spec.grid
    gates: dict[str, dict] = {}

    def gate(name, value, limit, ok=None):
        gates[name] = {"value": value, "limit": limit, "pass": bool(value <= limit if ok is None else ok)}

    battery = TestBattery.build(grid, spec.params, seed=m.seed)
    gate("weak_residual", weak_residual(sol, spec, battery), RESIDUAL_GATE)
    table = build_green(grid, spec.params)
    gate("green_symmetry", table.symmetry_defect(), 1e-10)
    gate("green_positivity", float(-table.G.min()), 0.0, ok=bool(np.all(table.G > 0)))
    scale = float(np.max(np.abs(sol.u.values))) or 1.0
    gate("decomposition", sol.decomposition_defect() / scale, 1e-12)
    if _is_torsion(spec):
        exact = spec.g.eps * abs(spec.g.f) * (1 - grid.nodes ** 2) ** spec.params.alpha / \
            getoor_constant(spec.params.alpha)
        err = float(np.max(np.abs(sol.u.values - exact)) / max(np.max(np.abs(exact)), 1e-300))
        gate("torsion_oracle", err, TORSION_GATE)
    if 1.0 <= spec.g.p < spec.p_star and spec.g.g is None and spec.eta is None:
        rep = comparison_experiment(ComparisonConfig(spec, seed=m.seed))
        gate("comparison_ordering", max(rep.ordering_violation, rep.sigma_violation), rep.tol)
        gate("uniqueness", rep.uniqueness_gap, rep.tol)
    prior = m.out_dir / "solution.csv"
    if prior.exists():
        same = prior.read_text(encoding="utf-8") == solution_csv(sol)
        gate("roundtrip", 0.0 if same else 1.0, 0.0, ok=same)
    ok = all(g["pass"] for g in gates.values())
    _write(m.out_dir / "verify.json", io.dumps({"pass": ok, "gates": gates}))
    for name, g in gates.items():
        print(f"{'PASS' if g['pass'] else 'FAIL'} {name}: {g['value']:.3e} (limit {g['limit']:.1e})")
    if not ok:
        raise VerificationFailure("verification gates failed: " +
                                  ", ".join(k for k, g in gates.items() if not g["pass"]))
    return EXIT_OK


def cmd_sweep(spec: ProblemSpec, m: RunManifest, opts: dict) -> int:
    cfg = SweepConfig(alpha=spec.params.alpha)
    if "ns" in opts:
        cfg.ns = tuple(int(n) for n in opts["ns"])
    if "factors" in opts:
        cfg.factors = tuple(float(f) for f in opts["factors"])
    table = critical_sweep(cfg)
    table.write_csv(m.out_dir / "sweep.csv")
    for q, v in table.verdicts.items():
        print(f"q = {q:.4g} ({q / table.p_star:.2f} p*): w1q {v['w1q']}, weighted {v['weighted']}")
    return EXIT_OK


def cmd_boundary(spec: ProblemSpec, m: RunManifest, opts: dict) -> int:
    if spec.eta is None:
        raise ValidationError("boundary-support", "the boundary command needs an eta measure in the spec")
    schedule = tuple(float(t) for t in opts.get("schedule", BOUNDARY_SCHEDULE))
    _, rep = solve_concentrated(spec.eta, spec, schedule)
    rep.write_csv(m.out_dir / "boundary.csv")
    summary = {"cauchy_decreasing": rep.cauchy_decreasing, "bounded": {f"{q:.6g}": b for q, b in rep.bounded.items()}}
    _write(m.out_dir / "boundary.json", io.dumps(summary))
    print(f"L1 Cauchy differences decreasing: {rep.cauchy_decreasing}")
    return EXIT_OK


def cmd_stability(spec: ProblemSpec, m: RunManifest, opts: dict) -> int:
    if not 1.0 <= spec.g.p < spec.p_star:
        raise ValidationError("uniqueness", f"stability needs 1 <= p < p*, got p = {spec.g.p}")
    cfg = StabilityConfig(spec)
    if "schedule" in opts:
        cfg.schedule = tuple(int(n) for n in opts["schedule"])
    if "reference_level" in opts:
        cfg.reference_level = int(opts["reference_level"])
    rep = stability_experiment(cfg)
    rep.write_csv(m.out_dir / "stability.csv")
    _write(m.out_dir / "stability.json", io.dumps({"eventually_decreasing": rep.eventually_decreasing,
                                                   "final": rep.final, "threshold": rep.threshold,
                                                   "final_ok": rep.final_ok}))
    if not rep.eventually_decreasing:
        log.warning("non-monotone distance tail (possible non-uniqueness regime)")
    print(f"eventually decreasing: {rep.eventually_decreasing}; final distance {rep.final:.3e}")
    return EXIT_OK


HANDLERS = {"solve": cmd_solve, "verify": cmd_verify, "sweep": cmd_sweep, "boundary": cmd_boundary,
            "stability": cmd_stability}


def run(manifest: RunManifest) -> int:
    """Execute one command and map failures to exit codes."""
    try:
        spec, opts = load_problem(manifest)
        manifest.out_dir.mkdir(parents=True, exist_ok=True)
        np.random.seed(manifest.seed)
        return HANDLERS[manifest.command](spec, manifest, opts)
    except NoRootError as exc:
        c = "unknown" if exc.c_max is None else f"{exc.c_max:.6g}"
        print(f"error: {exc}\nlargest admissible c: {c}", file=sys.stderr)
        return EXIT_NOROOT
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (VerificationFailure, InconsistencyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (FracGreenError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracgreen", description="Fractional measure-data elliptic solver.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--spec", required=True, type=Path, help="JSON problem spec")
    ap.add_argument("--out", required=True, type=Path, help="output directory")
    ap.add_argument("--seed", type=int, default=0, help="seed for the test battery and probes")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a spec entry (repeatable)")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return run(RunManifest(args.command, args.spec, args.out, args.seed, list(args.overrides)))


if __name__ == "__main__":
    sys.exit(main())
