"""YAML configuration schema and the coefficient expression grammar."""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from typing import Any, Callable

import yaml

from .sp_algebra import build_basis, parse_label

SCHEMA_VERSION = 1
SUITES = ("algebra", "involutions", "rep", "cs", "evolution", "observables")
SCENARIO_KINDS = ("ehrenfest", "parabolic_drift", "nonunitary_probe", "evolution", "geometry")
TABLES = ("structure_constants", "weights", "kernel")


class ConfigError(ValueError):
    def __init__(self, field_path: str, message: str, line: int | None = None):
        self.field_path, self.line = field_path, line
        where = f"{field_path}" + (f" (line {line})" if line is not None else "")
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------- expressions

_FUNCS: dict[str, Callable[[float], float]] = {"sin": math.sin, "cos": math.cos}
_CONSTS = {"pi": math.pi}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


def _check_node(node: ast.AST, text: str) -> None:
    if isinstance(node, ast.Expression):
        _check_node(node.body, text)
    elif isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
        if isinstance(node.op, ast.Pow):
            exp = node.right
            if isinstance(exp, ast.UnaryOp):
                exp = exp.operand
            if not (isinstance(exp, ast.Constant) and isinstance(exp.value, int) and not isinstance(exp.value, bool)):
                raise ValueError(f"exponent must be an integer literal in {text!r}")
        _check_node(node.left, text)
        _check_node(node.right, text)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        _check_node(node.operand, text)
    elif isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float, complex)):
            raise ValueError(f"only numeric literals are allowed in {text!r}")
    elif isinstance(node, ast.Name):
        if node.id != "t" and node.id not in _CONSTS:
            raise ValueError(f"unknown name {node.id!r} in {text!r}")
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or len(node.args) != 1 or node.keywords:
            raise ValueError(f"only sin(...) and cos(...) calls are allowed in {text!r}")
        _check_node(node.args[0], text)
    else:
        raise ValueError(f"unsupported syntax {type(node).__name__} in {text!r}")


def parse_coefficient(text: str | int | float) -> Callable[[float], complex]:
    """Compile a polynomial/trigonometric expression in ``t``.

    Grammar: numbers (``1j`` allowed), ``t``, ``pi``, ``+ - * /``,
    ``**`` with integer exponents, ``sin`` and ``cos``.
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        value = complex(text)
        return lambda t: value
    src = str(text)
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse {src!r}: {exc.msg}") from None
    _check_node(tree, src)
    code = compile(tree, "<coefficient>", "eval")
    env = {"__builtins__": {}, **_FUNCS, **_CONSTS}

    def alpha(t: float) -> complex:
        return complex(eval(code, env, {"t": t}))

    return alpha


# ---------------------------------------------------------------- schema


@dataclass(frozen=True)
class RealizationConfig:
    kind: str = "defining"
    cutoff: int = 4
    flavours: int = 1


@dataclass(frozen=True)
class GridConfig:
    start: float = 0.0
    stop: float = 1.0
    steps: int = 11


@dataclass(frozen=True)
class ScenarioConfig:
    id: str
    kind: str
    rank: int
    realization: RealizationConfig
    generators: dict
    grid: GridConfig
    outputs: tuple = ("csv", "json")
    state: str = "random"
    hamiltonian: str = "generators"


@dataclass(frozen=True)
class VerifyConfig:
    rank: int = 4
    suites: tuple = SUITES
    samples: int = 20


@dataclass(frozen=True)
class ExportConfig:
    rank: int = 4
    tables: tuple = TABLES
    kernel_c: float = 2.0
    kernel_points: int = 5


@dataclass(frozen=True)
class RunConfig:
    schema_version: int
    seed: int
    verify: VerifyConfig
    scenarios: tuple
    export: ExportConfig


class _Reader:
    """Typed field access with line numbers from the composed YAML tree."""

    def __init__(self, text: str):
        try:
            self.node = yaml.compose(text, Loader=yaml.SafeLoader)
            self.data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError("<document>", str(getattr(exc, "problem", exc)), mark.line + 1 if mark else None) from None
        if self.data is None:
            self.data = {}
        if not isinstance(self.data, dict):
            raise ConfigError("<document>", "top level must be a mapping", 1)

    def line(self, path: tuple) -> int | None:
        node = self.node
        for key in path:
            if isinstance(node, yaml.MappingNode):
                match = [v for k, v in node.value if k.value == key]
                if not match:
                    return node.start_mark.line + 1
                node = match[0]
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                node = node.value[key]
            else:
                break
        return node.start_mark.line + 1 if node is not None else None

    def fail(self, path: tuple, message: str):
        name = "".join(f"[{p}]" if isinstance(p, int) else (f".{p}" if i else p) for i, p in enumerate(path))
        raise ConfigError(name or "<document>", message, self.line(path))


def _get(reader: _Reader, obj: dict, path: tuple, key: str, typ, default: Any = ...):
    if key not in obj:
        if default is ...:
            reader.fail(path + (key,), "required field is missing")
        return default
    val = obj[key]
    if typ is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, typ) or isinstance(val, bool) and typ is not bool:
        reader.fail(path + (key,), f"expected {typ.__name__}, got {type(val).__name__}")
    return val


def _unknown(reader: _Reader, obj: dict, path: tuple, allowed: set):
    for key in obj:
        if key not in allowed:
            reader.fail(path + (key,), "unknown field")


def _realization(reader, obj, path) -> RealizationConfig:
    if obj is None:
        return RealizationConfig()
    if isinstance(obj, str):
        obj = {"kind": obj}
    if not isinstance(obj, dict):
        reader.fail(path, "expected a mapping or a realization name")
    _unknown(reader, obj, path, {"kind", "cutoff", "flavours"})
    kind = _get(reader, obj, path, "kind", str, "defining")
    if kind not in ("defining", "fock", "metaplectic", "lorentzian"):
        reader.fail(path + ("kind",), f"unknown realization {kind!r}")
    cutoff = _get(reader, obj, path, "cutoff", int, 4)
    flavours = _get(reader, obj, path, "flavours", int, 1)
    if cutoff < 1 or flavours < 1:
        reader.fail(path, "cutoff and flavours must be positive")
    return RealizationConfig(kind, cutoff, flavours)


def _grid(reader, obj, path) -> GridConfig:
    if not isinstance(obj, dict):
        reader.fail(path, "expected a mapping with start, stop, steps")
    _unknown(reader, obj, path, {"start", "stop", "steps"})
    g = GridConfig(
        _get(reader, obj, path, "start", float, 0.0),
        _get(reader, obj, path, "stop", float),
        _get(reader, obj, path, "steps", int),
    )
    if g.steps < 2:
        reader.fail(path + ("steps",), "grid needs at least 2 steps")
    if not g.stop > g.start:
        reader.fail(path + ("stop",), "stop must exceed start")
    return g


def _scenario(reader, obj, path) -> ScenarioConfig:
    if not isinstance(obj, dict):
        reader.fail(path, "scenario must be a mapping")
    _unknown(reader, obj, path, {"id", "kind", "rank", "realization", "generators", "grid", "outputs", "state", "hamiltonian"})
    sid = _get(reader, obj, path, "id", str)
    kind = _get(reader, obj, path, "kind", str)
    if kind not in SCENARIO_KINDS:
        reader.fail(path + ("kind",), f"unknown scenario kind {kind!r}; expected one of {', '.join(SCENARIO_KINDS)}")
    rank = _get(reader, obj, path, "rank", int, 1)
    if not 1 <= rank <= 4:
        reader.fail(path + ("rank",), "rank must lie in 1..4")
    gens = _get(reader, obj, path, "generators", dict, {})
    basis = build_basis(rank)
    table = {}
    for name, expr in gens.items():
        try:
            lab = parse_label(str(name), rank)
        except KeyError as exc:
            reader.fail(path + ("generators", name), str(exc.args[0]))
        if lab not in basis.index:
            reader.fail(path + ("generators", name), f"generator {name!r} is not in the basis")
        try:
            parse_coefficient(expr)
        except ValueError as exc:
            reader.fail(path + ("generators", name), str(exc))
        table[str(name)] = expr if isinstance(expr, str) else float(expr)
    hamiltonian = _get(reader, obj, path, "hamiltonian", str, "generators")
    if hamiltonian not in ("generators", "stress_energy"):
        reader.fail(path + ("hamiltonian",), "hamiltonian must be 'generators' or 'stress_energy'")
    if hamiltonian == "generators" and not table:
        reader.fail(path + ("generators",), "at least one generator is required")
    outputs = _get(reader, obj, path, "outputs", list, ["csv", "json"])
    for k, o in enumerate(outputs):
        if o not in ("csv", "json"):
            reader.fail(path + ("outputs", k), f"unknown output {o!r}")
    state = _get(reader, obj, path, "state", str, "random")
    if state not in ("random", "vacuum"):
        reader.fail(path + ("state",), "state must be 'random' or 'vacuum'")
    return ScenarioConfig(
        id=sid,
        kind=kind,
        rank=rank,
        realization=_realization(reader, obj.get("realization"), path + ("realization",)),
        generators=table,
        grid=_grid(reader, obj.get("grid"), path + ("grid",)),
        outputs=tuple(outputs),
        state=state,
        hamiltonian=hamiltonian,
    )


def load_config(text: str) -> RunConfig:
    reader = _Reader(text)
    top = reader.data
    _unknown(reader, top, (), {"schema_version", "seed", "verify", "scenarios", "export"})
    version = _get(reader, top, (), "schema_version", int)
    if version != SCHEMA_VERSION:
        reader.fail(("schema_version",), f"unsupported schema version {version}; expected {SCHEMA_VERSION}")
    seed = _get(reader, top, (), "seed", int, 0)

    v = top.get("verify") or {}
    if not isinstance(v, dict):
        reader.fail(("verify",), "expected a mapping")
    _unknown(reader, v, ("verify",), {"rank", "suites", "samples"})
    suites = _get(reader, v, ("verify",), "suites", list, list(SUITES))
    for k, s in enumerate(suites):
        if s not in SUITES:
            reader.fail(("verify", "suites", k), f"unknown suite {s!r}")
    vrank = _get(reader, v, ("verify",), "rank", int, 4)
    if not 1 <= vrank <= 4:
        reader.fail(("verify", "rank"), "rank must lie in 1..4")
    verify = VerifyConfig(vrank, tuple(suites), _get(reader, v, ("verify",), "samples", int, 20))

    raw = top.get("scenarios") or []
    if not isinstance(raw, list):
        reader.fail(("scenarios",), "expected a list")
    scenarios = tuple(_scenario(reader, s, ("scenarios", k)) for k, s in enumerate(raw))
    ids = [s.id for s in scenarios]
    if len(set(ids)) != len(ids):
        reader.fail(("scenarios",), "scenario ids must be unique")

    e = top.get("export") or {}
    if not isinstance(e, dict):
        reader.fail(("export",), "expected a mapping")
    _unknown(reader, e, ("export",), {"rank", "tables", "kernel_c", "kernel_points"})
    tables = _get(reader, e, ("export",), "tables", list, list(TABLES))
    for k, t in enumerate(tables):
        if t not in TABLES:
            reader.fail(("export", "tables", k), f"unknown table {t!r}")
    export = ExportConfig(
        _get(reader, e, ("export",), "rank", int, 4),
        tuple(tables),
        _get(reader, e, ("export",), "kernel_c", float, 2.0),
        _get(reader, e, ("export",), "kernel_points", int, 5),
    )
    return RunConfig(version, seed, verify, scenarios, export)
