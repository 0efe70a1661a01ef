from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from fracgreen import cli
from fracgreen.errors import SchemaError, ValidationError
from fracgreen.io import apply_overrides, dumps, parse_spec, spec_from_dict

FIXTURES = sorted(p.name for p in resources.files("fracgreen").joinpath("fixtures").iterdir()
                  if p.name.endswith(".json"))
FIXDIR = Path(str(resources.files("fracgreen").joinpath("fixtures")))


def _doc(name="superlinear_desk"):
    return json.loads((FIXDIR / f"{name}.json").read_text())


def test_minimal_linear_spec_parses():
    spec = parse_spec('{"params": {"N": 1, "alpha": 0.75}, "grid": {"n": 64}, '
                      '"g": {"c": 0.0, "p": 1.0, "eps": 0.0}, "sigma": 1.0, "nu": {"atoms": [[0.0, 1.0]]}}')
    assert spec.grid.n == 64 and spec.sigma == 1.0 and spec.nu.atom_mass == 1.0
    assert spec.mu.is_zero and spec.eta is None


@pytest.mark.parametrize("mutate,pointer", [
    (lambda d: d["g"].update(bogus=1), "/g/bogus"),
    (lambda d: d.update(extra=1), "/extra"),
    (lambda d: d["params"].pop("alpha"), "/params"),
    (lambda d: d["grid"].update(n="many"), "/grid/n"),
    (lambda d: d["nu"].update(atoms=[[0.0]]), "/nu/atoms/0"),
    (lambda d: d["g"].update(f="sqrt:2"), "/g/f"),
])
def test_schema_violations_carry_pointer(mutate, pointer):
    d = _doc()
    mutate(d)
    with pytest.raises(SchemaError) as exc:
        spec_from_dict(d)
    assert exc.value.pointer == pointer


def test_critical_p_rejected():
    d = _doc()
    d["g"]["p"] = 2.0
    with pytest.raises(ValidationError) as exc:
        spec_from_dict(d)
    assert exc.value.assumption == "subcritical"


def test_file_source(tmp_path):
    d = _doc()
    d["grid"]["n"] = 16
    np.savetxt(tmp_path / "f.txt", np.linspace(0, 1, 16))
    d["g"]["f"] = "file:f.txt"
    spec = spec_from_dict(d, base=tmp_path)
    np.testing.assert_allclose(spec.g.f_values(spec.grid), np.linspace(0, 1, 16))
    d["grid"]["n"] = 17
    with pytest.raises(SchemaError):
        spec_from_dict(d, base=tmp_path)


def test_overrides():
    d = apply_overrides(_doc(), ["g.c=0.01", "solver.levels=[8,16]", "grid.n=128"])
    spec = spec_from_dict(d)
    assert spec.g.c == 0.01 and spec.solver.levels == (8, 16) and spec.grid.n == 128
    with pytest.raises(SchemaError):
        apply_overrides({}, ["novalue"])


def test_dumps_is_canonical():
    assert dumps({"b": np.float64(1.5), "a": np.arange(2)}) == '{\n  "a": [\n    0,\n    1\n  ],\n  "b": 1.5\n}\n'


def run(tmp_path, *args, spec="superlinear_desk"):
    return cli.main([args[0], "--spec", str(FIXDIR / f"{spec}.json"), "--out", str(tmp_path), *args[1:]])


@pytest.mark.parametrize("fixture", FIXTURES)
def test_verify_exits_zero_on_shipped_fixtures(tmp_path, fixture):
    assert run(tmp_path, "verify", spec=fixture[:-5]) == 0
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["pass"] is True


def test_solve_then_verify_roundtrip(tmp_path):
    assert run(tmp_path, "solve") == 0
    assert (tmp_path / "solution.csv").read_text().startswith("x,u,g_part,p_part,eta_part\n")
    assert run(tmp_path, "verify") == 0
    assert json.loads((tmp_path / "verify.json").read_text())["gates"]["roundtrip"]["pass"]


def test_outputs_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(out, "solve", "--seed", "7") == 0
        assert run(out, "sweep", "--seed", "7") == 0
    for name in ("solution.csv", "diagnostics.json", "sweep.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


@pytest.mark.parametrize("args,code", [
    (("solve", "--set", "g.c=5"), cli.EXIT_NOROOT),
    (("solve", "--set", "g.p=2.0"), cli.EXIT_SPEC),
    (("solve", "--set", "g.unknown=1"), cli.EXIT_SPEC),
    (("solve", "--set", "solver.max_iter=2"), cli.EXIT_NONCONV),
    (("boundary",), cli.EXIT_SPEC),
    (("verify", "--set", "sigma=1e3"), cli.EXIT_NOROOT),
])
def test_exit_codes(tmp_path, capsys, args, code):
    assert run(tmp_path, *args) == code
    if code == cli.EXIT_NOROOT and args[0] == "solve":
        assert "largest admissible c: 0.095" in capsys.readouterr().err


def test_verification_failure_exit(tmp_path):
    # a stale solution file from another problem breaks the round-trip gate
    assert run(tmp_path, "solve", "--set", "sigma=0.5") == 0
    assert run(tmp_path, "verify") == cli.EXIT_VERIFY


def test_missing_spec_file(tmp_path):
    assert cli.main(["solve", "--spec", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == cli.EXIT_SPEC


def test_stability_and_boundary_commands(tmp_path):
    assert run(tmp_path, "stability", "--set", "run.schedule=[4,8]", "--set", "run.reference_level=16") == 0
    assert len((tmp_path / "stability.csv").read_text().splitlines()) == 3
    assert run(tmp_path, "boundary", "--set", "run.schedule=[0.2,0.1]", spec="boundary_dirac") == 0
    assert json.loads((tmp_path / "boundary.json").read_text())["cauchy_decreasing"] in (True, False)


def test_bad_command_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["explode", "--spec", "x", "--out", str(tmp_path)])
    assert exc.value.code == 2
