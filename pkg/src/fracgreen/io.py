"""JSON problem specs: schema check, conversion to :class:`ProblemSpec` and back.

Layout::

    {"params": {"N": 1, "alpha": 0.75},
     "grid":   {"n": 512},
     "g":      {"c": 0.05, "p": 1.5, "eps": 0.1, "f": "const:1"},
     "sigma": 1.0, "rho": 0.5,
     "nu":  {"atoms": [[0.0, 1.0]]},
     "mu":  {"atoms": [[2.0, 1.0]], "separation": 0.05},
     "eta": {"atoms": [[1.0, 1.0]]},
     "solver": {"tol": 1e-8, "max_iter": 100, "theta": 1.0}}

Atoms are ``[x_1, ..., x_N, mass]``.  ``f`` and measure densities take
``"const:<v>"`` or ``"file:<path>"``; a file holds one value per grid node
(whitespace or comma separated) and relative paths resolve against the spec
file's directory.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .errors import SchemaError
from .model import (BOUNDARY, EXTERIOR, INTERIOR, FracParams, Grid, GridField, GrowthSpec, ProblemSpec, RadonMeasure,
                    SolverConfig, validate_problem)

_NUM = {"type": "number"}
_SOURCE = {"type": "string", "pattern": "^(const:|file:)"}

_MEASURE = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "atoms": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2}},
        "density": {"anyOf": [_SOURCE, {"type": "null"}]},
        "density_support": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "separation": {"type": "number", "exclusiveMinimum": 0},
    },
}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["params", "grid", "g"],
    "properties": {
        "params": {"type": "object", "additionalProperties": False, "required": ["N", "alpha"],
                   "properties": {"N": {"type": "integer"}, "alpha": _NUM}},
        "grid": {"type": "object", "additionalProperties": False, "required": ["n"],
                 "properties": {"n": {"type": "integer"}}},
        "g": {"type": "object", "additionalProperties": False, "required": ["c", "p"],
              "properties": {"c": _NUM, "p": _NUM, "eps": _NUM, "f": {"anyOf": [_SOURCE, _NUM]}}},
        "sigma": _NUM,
        "rho": _NUM,
        "nu": _MEASURE,
        "mu": _MEASURE,
        "eta": {"anyOf": [_MEASURE, {"type": "null"}]},
        "solver": {"type": "object", "additionalProperties": False,
                   "properties": {"tol": _NUM, "max_iter": {"type": "integer"}, "theta": _NUM,
                                  "level_tol": _NUM, "mollifier_radius": _NUM,
                                  "levels": {"type": "array", "items": {"type": "integer"}, "minItems": 1}}},
    },
}


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path) or "/"


def check_schema(doc: Any) -> None:
    """Raise :class:`SchemaError` with a JSON pointer for the first violation found."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if not errors:
        return
    err = errors[0]
    path = list(err.absolute_path)
    if err.validator == "additionalProperties":
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(k for k in err.instance if k not in allowed)
        if extra:
            path.append(extra[0])
            raise SchemaError(_pointer(path), f"unknown key {extra[0]!r}")
    raise SchemaError(_pointer(path), err.message)


def _load_values(src: str | float, base: Path, grid: Grid, where: str) -> float | np.ndarray:
    if isinstance(src, (int, float)):
        return float(src)
    kind, _, rest = src.partition(":")
    if kind == "const":
        try:
            return float(rest)
        except ValueError:
            raise SchemaError(where, f"bad constant {rest!r}") from None
    path = Path(rest)
    if not path.is_absolute():
        path = base / path
    try:
        vals = np.array(path.read_text(encoding="utf-8").replace(",", " ").split(), dtype=float)
    except (OSError, ValueError) as exc:
        raise SchemaError(where, f"cannot read values from {path}: {exc}") from None
    if vals.shape != (grid.n,):
        raise SchemaError(where, f"{path} holds {vals.size} values, the grid has {grid.n} nodes")
    return vals


def _measure(doc: dict | None, support: str, base: Path, grid: Grid, where: str) -> RadonMeasure:
    if not doc:
        return RadonMeasure.empty(support)
    atoms = doc.get("atoms", [])
    widths = {len(a) for a in atoms}
    if len(widths) > 1 or (widths and widths != {grid.N + 1}):
        raise SchemaError(where + "/atoms", f"atoms must be [x_1..x_{grid.N}, mass]")
    arr = np.array(atoms, dtype=float).reshape(-1, grid.N + 1)
    kw: dict[str, Any] = {}
    if "separation" in doc:
        kw["separation"] = float(doc["separation"])
    dens = doc.get("density")
    if dens is not None:
        vals = _load_values(dens, base, grid, where + "/density")
        if support == INTERIOR:
            kw["density"] = GridField(grid, np.broadcast_to(vals, (grid.n,)).copy())
        else:
            if "density_support" not in doc:
                raise SchemaError(where + "/density_support", "exterior densities need density_support")
            if not np.isscalar(vals):
                raise SchemaError(where + "/density", "exterior densities must be constant")
            c = float(vals)
            kw["density"] = lambda t, c=c: np.full(np.shape(t), c)
            kw["density_support"] = tuple(doc["density_support"])
    return RadonMeasure(points=arr[:, :-1], masses=arr[:, -1], support=support, **kw)


def spec_from_dict(doc: dict, base: str | Path = ".", validate: bool = True) -> ProblemSpec:
    """Build a :class:`ProblemSpec` from a decoded document."""
    check_schema(doc)
    base = Path(base)
    prm = doc["params"]
    params = FracParams(int(prm["N"]), float(prm["alpha"]))
    grid = Grid(int(doc["grid"]["n"]), int(prm["N"]))
    gd = doc["g"]
    f = _load_values(gd.get("f", 0.0), base, grid, "/g/f")
    if not np.isscalar(f):
        f = GridField(grid, f)
    g = GrowthSpec(float(gd["c"]), float(gd["p"]), float(gd.get("eps", 0.0)), f)
    solver = SolverConfig(**{k: (tuple(v) if k == "levels" else v) for k, v in doc.get("solver", {}).items()})
    eta = doc.get("eta")
    spec = ProblemSpec(
        params=params, grid=grid, g=g,
        sigma=float(doc.get("sigma", 0.0)), rho=float(doc.get("rho", 0.0)),
        nu=_measure(doc.get("nu"), INTERIOR, base, grid, "/nu"),
        mu=_measure(doc.get("mu"), EXTERIOR, base, grid, "/mu"),
        eta=_measure(eta, BOUNDARY, base, grid, "/eta") if eta else None,
        solver=solver,
    )
    return validate_problem(spec) if validate else spec


def parse_spec(text: str, base: str | Path = ".", validate: bool = True) -> ProblemSpec:
    """Parse JSON text into a validated :class:`ProblemSpec`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("/", f"malformed JSON: {exc}") from None
    return spec_from_dict(doc, base, validate)


def load_document(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError("/", f"malformed JSON: {exc}") from None


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Return a copy of ``doc`` with ``key.sub=value`` assignments applied.

    Values are decoded as JSON when possible and kept as strings otherwise.
    """
    out = copy.deepcopy(doc)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise SchemaError("/", f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise SchemaError(_pointer(parts), f"cannot descend into {p!r}")
            node = nxt
        node[parts[-1]] = value
    return out


def dumps(obj: Any) -> str:
    """Deterministic JSON: sorted keys, numpy scalars and arrays converted, LF newline."""
    def conv(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, (tuple, set)):
            return list(o)
        raise TypeError(f"not serializable: {type(o).__name__}")
    return json.dumps(obj, sort_keys=True, indent=2, default=conv) + "\n"
