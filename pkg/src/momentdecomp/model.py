"""Chain models: level-by-level conditional distributions compiled to a FiniteJoint.

A model file is JSON::

    {
      "levels": [
        {"name": "x1", "dist": {"kind": "bernoulli", "p": "0.5"}},
        {"name": "x2", "dist": {"kind": "bernoulli", "p": "0.25 + 0.5*x1"}}
      ],
      "leaf": {"targets": ["y"], "expr_atoms": [[["x1 + x2"], 1]]}
    }

Level distributions are ``bernoulli {p}``, ``binomial {n, p}`` and
``categorical {values, probs}``; every parameter is a number or an expression
string over earlier level names. The leaf gives the conditional law of the
targets given the whole chain in one of three encodings:

``cases``
    ``[{"when": {"x1": 0, ...}, "atoms": [[[y1, y2], prob], ...]}, ...]``, one
    entry per reachable prefix.
``expr_atoms``
    ``[[[expr_y1, expr_y2], expr_prob], ...]`` evaluated at each prefix.
``independent``
    one distribution spec per target; the targets are conditionally
    independent and the leaf is their product table.
"""

from __future__ import annotations

import json
import math
import re
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass
from typing import Any, Union

from .errors import (
    InvalidDistributionSpec,
    InvalidProbability,
    ModelSyntaxError,
    SupportExplosion,
    UnknownVariableReference,
)
from .expr import FUNCTIONS, Expr, Num, evaluate, parse_expr, unparse
from .joint import FiniteJoint

DEFAULT_MAX_ATOMS = 10**7
PROB_TOLERANCE = 1e-9

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class Bernoulli:
    p: Expr


@dataclass(frozen=True)
class Binomial:
    n: int
    p: Expr


@dataclass(frozen=True)
class Categorical:
    values: tuple[float, ...]
    probs: tuple[Expr, ...]


Dist = Union[Bernoulli, Binomial, Categorical]


@dataclass(frozen=True)
class LevelSpec:
    name: str
    dist: Dist


@dataclass(frozen=True)
class LeafSpec:
    """Conditional law of the targets given the full prefix.

    Exactly one of ``cases``, ``expr_atoms`` and ``independent`` is set.
    ``cases`` maps a prefix (ordered as the levels) to its atom list.
    """

    targets: tuple[str, ...]
    cases: Mapping[tuple[float, ...], tuple[tuple[tuple[float, ...], float], ...]] | None = None
    expr_atoms: tuple[tuple[tuple[Expr, ...], Expr], ...] | None = None
    independent: tuple[Dist, ...] | None = None


@dataclass(frozen=True)
class ChainModel:
    levels: tuple[LevelSpec, ...]
    leaf: LeafSpec

    @property
    def k(self) -> int:
        return len(self.levels)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(level.name for level in self.levels)


@dataclass(frozen=True)
class CompileReport:
    atom_count: int
    mass_deficit: float


# -- parsing ------------------------------------------------------------------------


def _check_keys(obj: Any, required: set[str], optional: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise InvalidDistributionSpec(f"{where}: expected an object, got {type(obj).__name__}")
    missing = required - obj.keys()
    if missing:
        raise InvalidDistributionSpec(f"{where}: missing key(s) {sorted(missing)}")
    unknown = obj.keys() - required - optional
    if unknown:
        raise InvalidDistributionSpec(f"{where}: unknown key(s) {sorted(unknown)}")


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidDistributionSpec(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise InvalidDistributionSpec(f"{where}: number must be finite")
    return value


def _param(value: Any, scope: Sequence[str], where: str) -> Expr:
    if isinstance(value, str):
        return parse_expr(value, scope, where)
    return Num(_number(value, where))


def _parse_dist(obj: Any, scope: Sequence[str], where: str) -> Dist:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise InvalidDistributionSpec(f"{where}: distribution needs a 'kind'")
    kind = obj["kind"]
    if kind == "bernoulli":
        _check_keys(obj, {"kind", "p"}, set(), where)
        return Bernoulli(_param(obj["p"], scope, f"{where}.p"))
    if kind == "binomial":
        _check_keys(obj, {"kind", "n", "p"}, set(), where)
        n = obj["n"]
        if isinstance(n, bool) or not isinstance(n, int) or n < 0:
            raise InvalidDistributionSpec(f"{where}.n: expected a non-negative integer literal, got {n!r}")
        return Binomial(n, _param(obj["p"], scope, f"{where}.p"))
    if kind == "categorical":
        _check_keys(obj, {"kind", "values", "probs"}, set(), where)
        values, probs = obj["values"], obj["probs"]
        if not isinstance(values, list) or not isinstance(probs, list) or not values:
            raise InvalidDistributionSpec(f"{where}: values and probs must be non-empty lists")
        if len(values) != len(probs):
            raise InvalidDistributionSpec(f"{where}: {len(values)} values but {len(probs)} probs")
        vals = tuple(_number(v, f"{where}.values[{i}]") for i, v in enumerate(values))
        if len(set(vals)) != len(vals):
            raise InvalidDistributionSpec(f"{where}: categorical values must be distinct")
        return Categorical(vals, tuple(_param(p, scope, f"{where}.probs[{i}]") for i, p in enumerate(probs)))
    raise InvalidDistributionSpec(f"{where}: unknown distribution kind {kind!r}")


def _check_name(name: Any, where: str) -> str:
    if not isinstance(name, str) or not _NAME_RE.match(name) or name in FUNCTIONS:
        raise InvalidDistributionSpec(f"{where}: invalid variable name {name!r}")
    return name


def _target_vector(value: Any, p: int, where: str) -> tuple[float, ...]:
    if p == 1 and not isinstance(value, list):
        value = [value]
    if not isinstance(value, list) or len(value) != p:
        raise InvalidDistributionSpec(f"{where}: expected a list of {p} target value(s)")
    return tuple(_number(v, f"{where}[{i}]") for i, v in enumerate(value))


def _parse_leaf(obj: Any, names: tuple[str, ...]) -> LeafSpec:
    _check_keys(obj, {"targets"}, {"cases", "expr_atoms", "independent"}, "leaf")
    targets = obj["targets"]
    if not isinstance(targets, list) or len(targets) not in (1, 2):
        raise InvalidDistributionSpec("leaf.targets: expected a list of one or two names")
    targets = tuple(_check_name(t, f"leaf.targets[{i}]") for i, t in enumerate(targets))
    if len(set(targets)) != len(targets) or set(targets) & set(names):
        raise InvalidDistributionSpec("leaf.targets: names must be distinct from each other and from levels")
    encodings = [key for key in ("cases", "expr_atoms", "independent") if key in obj]
    if len(encodings) != 1:
        raise InvalidDistributionSpec("leaf: exactly one of 'cases', 'expr_atoms', 'independent' is required")
    p = len(targets)
    kind = encodings[0]
    body = obj[kind]
    if not isinstance(body, list) or not body:
        raise InvalidDistributionSpec(f"leaf.{kind}: expected a non-empty list")

    if kind == "independent":
        if len(body) != p:
            raise InvalidDistributionSpec(f"leaf.independent: expected {p} distributions, got {len(body)}")
        return LeafSpec(targets, independent=tuple(_parse_dist(d, names, f"leaf.independent[{i}]") for i, d in enumerate(body)))

    if kind == "expr_atoms":
        atoms = []
        for i, atom in enumerate(body):
            where = f"leaf.expr_atoms[{i}]"
            if not isinstance(atom, list) or len(atom) != 2:
                raise InvalidDistributionSpec(f"{where}: expected [[values...], prob]")
            vec, prob = atom
            if p == 1 and not isinstance(vec, list):
                vec = [vec]
            if not isinstance(vec, list) or len(vec) != p:
                raise InvalidDistributionSpec(f"{where}: expected a list of {p} target value(s)")
            exprs = tuple(_param(v, names, f"{where}[0][{j}]") for j, v in enumerate(vec))
            atoms.append((exprs, _param(prob, names, f"{where}[1]")))
        return LeafSpec(targets, expr_atoms=tuple(atoms))

    cases: dict[tuple[float, ...], tuple] = {}
    for i, case in enumerate(body):
        where = f"leaf.cases[{i}]"
        _check_keys(case, {"when", "atoms"}, set(), where)
        when = case["when"]
        if not isinstance(when, dict) or set(when) != set(names):
            for name in when if isinstance(when, dict) else ():
                if name not in names:
                    raise UnknownVariableReference(f"{where}.when: unknown variable {name!r}")
            raise InvalidDistributionSpec(f"{where}.when: must assign every level variable {list(names)}")
        key = tuple(_number(when[n], f"{where}.when.{n}") for n in names)
        if key in cases:
            raise InvalidDistributionSpec(f"{where}: duplicate case for prefix {key}")
        if not isinstance(case["atoms"], list) or not case["atoms"]:
            raise InvalidDistributionSpec(f"{where}.atoms: expected a non-empty list")
        atoms = []
        for j, atom in enumerate(case["atoms"]):
            if not isinstance(atom, list) or len(atom) != 2:
                raise InvalidDistributionSpec(f"{where}.atoms[{j}]: expected [[values...], prob]")
            atoms.append((_target_vector(atom[0], p, f"{where}.atoms[{j}][0]"), _number(atom[1], f"{where}.atoms[{j}][1]")))
        cases[key] = tuple(atoms)
    return LeafSpec(targets, cases=cases)


def _decode(text: bytes | str) -> str:
    if isinstance(text, str):
        return text
    try:
        return text.decode("utf-8")
    except UnicodeDecodeError as exc:
        head = text[: exc.start]
        line = head.count(b"\n") + 1
        column = exc.start - (head.rfind(b"\n") + 1) + 1
        raise ModelSyntaxError("input is not valid UTF-8", line, column) from None


def model_from_dict(data: Any) -> ChainModel:
    _check_keys(data, {"levels", "leaf"}, {"description"}, "model")
    if not isinstance(data["levels"], list):
        raise InvalidDistributionSpec("levels: expected a list")
    levels: list[LevelSpec] = []
    names: list[str] = []
    for i, level in enumerate(data["levels"]):
        where = f"levels[{i}]"
        _check_keys(level, {"name", "dist"}, set(), where)
        name = _check_name(level["name"], f"{where}.name")
        if name in names:
            raise InvalidDistributionSpec(f"{where}.name: duplicate level name {name!r}")
        levels.append(LevelSpec(name, _parse_dist(level["dist"], tuple(names), f"{where}.dist")))
        names.append(name)
    return ChainModel(tuple(levels), _parse_leaf(data["leaf"], tuple(names)))


def parse_model(text: bytes | str) -> ChainModel:
    """Parse and validate a JSON model file.

    Raises:
        ModelSyntaxError: malformed JSON or expression (with line/column).
        UnknownVariableReference: an expression refers to a later or unknown
            variable.
        InvalidDistributionSpec: structurally invalid model.
    """
    source = _decode(text)
    try:
        data = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ModelSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    return model_from_dict(data)


def load_model(path) -> ChainModel:
    with open(path, "rb") as fh:
        return parse_model(fh.read())


# -- serialization -----------------------------------------------------------------


def _param_json(expr: Expr) -> Any:
    if isinstance(expr, Num):
        return expr.value
    return unparse(expr)


def _dist_json(dist: Dist) -> dict[str, Any]:
    if isinstance(dist, Bernoulli):
        return {"kind": "bernoulli", "p": _param_json(dist.p)}
    if isinstance(dist, Binomial):
        return {"kind": "binomial", "n": dist.n, "p": _param_json(dist.p)}
    return {"kind": "categorical", "values": list(dist.values), "probs": [_param_json(p) for p in dist.probs]}


def model_to_dict(model: ChainModel) -> dict[str, Any]:
    leaf = model.leaf
    out: dict[str, Any] = {"targets": list(leaf.targets)}
    if leaf.independent is not None:
        out["independent"] = [_dist_json(d) for d in leaf.independent]
    elif leaf.expr_atoms is not None:
        out["expr_atoms"] = [[[_param_json(e) for e in vec], _param_json(prob)] for vec, prob in leaf.expr_atoms]
    else:
        out["cases"] = [
            {"when": dict(zip(model.names, key)), "atoms": [[list(vec), prob] for vec, prob in atoms]}
            for key, atoms in leaf.cases.items()
        ]
    return {
        "levels": [{"name": lv.name, "dist": _dist_json(lv.dist)} for lv in model.levels],
        "leaf": out,
    }


# -- compilation -----------------------------------------------------------------------


def binomial_pmf(n: int, p: float) -> list[float]:
    """Binomial pmf on ``0..n`` by multiplicative recurrence outward from the mode."""
    if p == 0.0:
        return [1.0] + [0.0] * n
    if p == 1.0:
        return [0.0] * n + [1.0]
    ratio = p / (1.0 - p)
    mode = min(n, int((n + 1) * p))
    w = [0.0] * (n + 1)
    w[mode] = 1.0
    for j in range(mode, n):
        w[j + 1] = w[j] * (n - j) / (j + 1) * ratio
    for j in range(mode, 0, -1):
        w[j - 1] = w[j] * j / (n - j + 1) / ratio
    total = math.fsum(w)
    return [x / total for x in w]


def _check_prob(value: float, where: str, env: Mapping[str, float]) -> float:
    if not 0.0 <= value <= 1.0:
        raise InvalidProbability(f"{where}: probability {value!r} outside [0, 1] at {_fmt_env(env)}")
    return value


def _fmt_env(env: Mapping[str, float]) -> str:
    return "{" + ", ".join(f"{k}={v:g}" for k, v in env.items()) + "}" if env else "the empty prefix"


def _normalized(pairs: list[tuple[Any, float]], where: str, env: Mapping[str, float]) -> list[tuple[Any, float]]:
    total = math.fsum(q for _, q in pairs)
    if abs(total - 1.0) > PROB_TOLERANCE:
        raise InvalidProbability(f"{where}: probabilities sum to {total!r} at {_fmt_env(env)}")
    return [(v, q / total) for v, q in pairs if q > 0.0]


def _dist_atoms(dist: Dist, env: Mapping[str, float], where: str) -> list[tuple[float, float]]:
    if isinstance(dist, Bernoulli):
        p = _check_prob(evaluate(dist.p, env), f"{where}.p", env)
        return [(v, q) for v, q in ((0.0, 1.0 - p), (1.0, p)) if q > 0.0]
    if isinstance(dist, Binomial):
        p = _check_prob(evaluate(dist.p, env), f"{where}.p", env)
        return [(float(j), q) for j, q in enumerate(binomial_pmf(dist.n, p)) if q > 0.0]
    probs = [_check_prob(evaluate(e, env), f"{where}.probs[{i}]", env) for i, e in enumerate(dist.probs)]
    return _normalized(list(zip(dist.values, probs)), where, env)


def _leaf_atoms(leaf: LeafSpec, names: tuple[str, ...], env: dict[str, float]) -> list[tuple[tuple[float, ...], float]]:
    if leaf.cases is not None:
        key = tuple(env[n] for n in names)
        try:
            atoms = leaf.cases[key]
        except KeyError:
            raise InvalidDistributionSpec(f"leaf.cases: no case for reachable prefix {_fmt_env(env)}") from None
        for vec, q in atoms:
            _check_prob(q, "leaf.cases", env)
        return _normalized(list(atoms), "leaf.cases", env)
    if leaf.expr_atoms is not None:
        pairs = []
        for i, (exprs, prob) in enumerate(leaf.expr_atoms):
            q = _check_prob(evaluate(prob, env), f"leaf.expr_atoms[{i}]", env)
            pairs.append((tuple(evaluate(e, env) for e in exprs), q))
        return _normalized(pairs, "leaf.expr_atoms", env)
    parts = [_dist_atoms(d, env, f"leaf.independent[{i}]") for i, d in enumerate(leaf.independent)]
    if len(parts) == 1:
        return [((v,), q) for v, q in parts[0]]
    return [((v1, v2), q1 * q2) for v1, q1 in parts[0] for v2, q2 in parts[1]]


def iter_paths(model: ChainModel) -> Iterator[tuple[dict[str, float], float]]:
    """Yield ``(prefix assignment, path probability)`` for every reachable full prefix."""
    levels = model.levels

    def walk(i: int, env: dict[str, float], prob: float):
        if i == len(levels):
            yield env, prob
            return
        level = levels[i]
        for value, q in _dist_atoms(level.dist, env, f"levels[{i}].dist"):
            yield from walk(i + 1, {**env, level.name: value}, prob * q)

    yield from walk(0, {}, 1.0)


def compile_model(model: ChainModel, max_atoms: int = DEFAULT_MAX_ATOMS) -> tuple[FiniteJoint, CompileReport]:
    """Enumerate every positive-probability path and build the joint table.

    Each conditional distribution is validated where it is reached and
    renormalized locally, so the product of conditionals is the joint pmf.
    """
    names = model.names
    rows: list[tuple[float, ...]] = []
    probs: list[float] = []
    for env, path_prob in iter_paths(model):
        prefix = tuple(env[n] for n in names)
        for yvec, q in _leaf_atoms(model.leaf, names, env):
            rows.append(prefix + tuple(yvec))
            probs.append(path_prob * q)
            if len(rows) > max_atoms:
                raise SupportExplosion(f"model has more than {max_atoms} atoms")
    deficit = abs(1.0 - math.fsum(probs))
    joint = FiniteJoint(names, model.leaf.targets, zip(rows, probs), merge=True)
    return joint, CompileReport(atom_count=len(joint), mass_deficit=deficit)
