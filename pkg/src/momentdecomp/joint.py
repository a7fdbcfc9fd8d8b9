"""Finite joint distributions over a conditioning chain and one or two targets.

A :class:`FiniteJoint` is an explicit pmf table over ``(X_1, ..., X_k, Y_1[, Y_2])``.
Atoms are kept in lexicographic order of their value vectors, so every prefix
``(x_1, ..., x_j)`` of the conditioning chain occupies a contiguous block of
rows. Conditioning, prefix grouping and splitting on the leading variable are
then slicing operations.

The moment functions here (:func:`expect`, :func:`covariance_direct`,
:func:`variance_direct`) use compensated summation and are the oracles the
decomposition engine is checked against.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from typing import Any

import numpy as np

from .errors import ArityError, InvalidJoint, UnknownVariable, ZeroProbabilityEvent

MASS_TOLERANCE = 1e-9

ScalarFunction = Callable[[tuple], float]


def _canonicalize(values: np.ndarray, probs: np.ndarray, merge: bool) -> tuple[np.ndarray, np.ndarray]:
    """Sort rows lexicographically and merge (or reject) identical rows."""
    n, d = values.shape
    if n == 0:
        return values, probs
    if d:
        order = np.lexsort(values.T[::-1])
        values = values[order]
        probs = probs[order]
        new_row = np.empty(n, dtype=bool)
        new_row[0] = True
        new_row[1:] = np.any(values[1:] != values[:-1], axis=1)
    else:
        new_row = np.zeros(n, dtype=bool)
        new_row[0] = True
    if not new_row.all():
        if not merge:
            dup = values[np.flatnonzero(~new_row)[0]]
            raise InvalidJoint(f"duplicate value vector {tuple(dup.tolist())}")
        starts = np.flatnonzero(new_row)
        probs = np.add.reduceat(probs, starts)
        values = values[starts]
    return values, probs


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


class FiniteJoint:
    """Immutable pmf table over ``cond_vars + target_vars``.

    Args:
        cond_vars: Names of the conditioning chain ``X_1 .. X_k`` in order.
        target_vars: Names of the targets (at most two). Joints produced by
            :func:`marginal` or :func:`condition` may carry no target at all.
        atoms: Iterable of ``(value_vector, prob)`` pairs, or a mapping from
            value vectors to probabilities. A bare number is accepted as the
            value vector of a one-variable joint.
        merge: Sum the probabilities of coinciding value vectors instead of
            rejecting them.

    Total mass within ``1e-9`` of one is renormalized; anything further off is
    rejected. Zero-probability atoms are dropped.
    """

    __slots__ = ("cond_vars", "target_vars", "_values", "_probs")

    def __init__(
        self,
        cond_vars: Sequence[str],
        target_vars: Sequence[str],
        atoms: Iterable[tuple[Sequence[float] | float, float]] | Mapping,
        *,
        merge: bool = False,
    ):
        cond_vars = tuple(cond_vars)
        target_vars = tuple(target_vars)
        names = cond_vars + target_vars
        if len(set(names)) != len(names):
            raise InvalidJoint(f"variable names must be distinct, got {names}")
        if len(target_vars) > 2:
            raise ArityError(f"at most two target variables are supported, got {len(target_vars)}")
        if isinstance(atoms, Mapping):
            atoms = atoms.items()
        d = len(names)
        rows: list[tuple[float, ...]] = []
        weights: list[float] = []
        for vec, prob in atoms:
            if np.ndim(vec) == 0:
                vec = (vec,)
            vec = tuple(float(v) for v in vec)
            if len(vec) != d:
                raise InvalidJoint(f"value vector {vec} has length {len(vec)}, expected {d}")
            if not all(math.isfinite(v) for v in vec):
                raise InvalidJoint(f"value vector {vec} is not finite")
            prob = float(prob)
            if not math.isfinite(prob) or prob < 0.0:
                raise InvalidJoint(f"invalid probability {prob} for atom {vec}")
            if prob > 0.0:
                rows.append(vec)
                weights.append(prob)
        total = math.fsum(weights)
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise InvalidJoint(f"probabilities sum to {total!r}, not 1")
        values = np.array(rows, dtype=float).reshape(len(rows), d) + 0.0  # folds -0.0 into 0.0
        probs = np.array(weights, dtype=float) / total
        values, probs = _canonicalize(values, probs, merge)
        self.cond_vars = cond_vars
        self.target_vars = target_vars
        self._values = _freeze(values)
        self._probs = _freeze(probs)

    @classmethod
    def _trusted(cls, cond_vars, target_vars, values: np.ndarray, probs: np.ndarray) -> FiniteJoint:
        # Caller guarantees sorted, distinct rows with positive mass summing to one.
        self = object.__new__(cls)
        self.cond_vars = tuple(cond_vars)
        self.target_vars = tuple(target_vars)
        self._values = _freeze(values)
        self._probs = _freeze(probs)
        return self

    # -- basic shape ----------------------------------------------------------

    @property
    def k(self) -> int:
        return len(self.cond_vars)

    @property
    def p(self) -> int:
        return len(self.target_vars)

    @property
    def variables(self) -> tuple[str, ...]:
        return self.cond_vars + self.target_vars

    @property
    def values(self) -> np.ndarray:
        """Read-only ``(n_atoms, k + p)`` array of value vectors."""
        return self._values

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def atoms(self) -> tuple[tuple[tuple[float, ...], float], ...]:
        return tuple(
            (tuple(row), prob) for row, prob in zip(self._values.tolist(), self._probs.tolist())
        )

    def __len__(self) -> int:
        return len(self._probs)

    def __repr__(self) -> str:
        return (
            f"FiniteJoint(cond_vars={self.cond_vars}, target_vars={self.target_vars}, "
            f"n_atoms={len(self)})"
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FiniteJoint):
            return NotImplemented
        return (
            self.cond_vars == other.cond_vars
            and self.target_vars == other.target_vars
            and np.array_equal(self._values, other._values)
            and np.array_equal(self._probs, other._probs)
        )

    __hash__ = None  # type: ignore[assignment]

    def index_of(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise UnknownVariable(f"unknown variable {name!r}; joint has {self.variables}") from None

    def target_column(self, name_or_index: str | int) -> np.ndarray:
        if isinstance(name_or_index, int):
            if not 0 <= name_or_index < self.p:
                raise UnknownVariable(f"target index {name_or_index} out of range for p={self.p}")
            return self._values[:, self.k + name_or_index]
        if name_or_index not in self.target_vars:
            raise UnknownVariable(f"{name_or_index!r} is not a target of this joint")
        return self._values[:, self.index_of(name_or_index)]

    # -- prefix structure ------------------------------------------------------

    def group_starts(self, depth: int) -> np.ndarray:
        """Row indices where a new ``depth``-prefix block begins."""
        if not 0 <= depth <= self.k:
            raise UnknownVariable(f"depth {depth} outside 0..{self.k}")
        n = len(self)
        if depth == 0 or n == 0:
            return np.zeros(min(n, 1), dtype=np.intp)
        block = self._values[:, :depth]
        change = np.any(block[1:] != block[:-1], axis=1)
        return np.concatenate(([0], np.flatnonzero(change) + 1))

    def children(self) -> list[tuple[float, float, FiniteJoint]]:
        """Split on the leading conditioning variable.

        Returns ``(x, P(X_1 = x), joint | X_1 = x)`` triples in increasing ``x``.
        """
        if self.k == 0:
            raise UnknownVariable("joint has no conditioning variable to split on")
        starts = self.group_starts(1)
        ends = np.append(starts[1:], len(self))
        rest_cond = self.cond_vars[1:]
        out = []
        for s, e in zip(starts.tolist(), ends.tolist()):
            block = self._probs[s:e]
            mass = math.fsum(block.tolist())
            out.append(
                (
                    float(self._values[s, 0]),
                    mass,
                    FiniteJoint._trusted(rest_cond, self.target_vars, self._values[s:e, 1:], block / mass),
                )
            )
        return out

    # -- serialization -----------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "cond_vars": list(self.cond_vars),
            "target_vars": list(self.target_vars),
            "atoms": [[list(vec), prob] for vec, prob in self.atoms],
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> FiniteJoint:
        expected = {"cond_vars", "target_vars", "atoms"}
        if set(data) != expected:
            raise InvalidJoint(f"joint JSON must have exactly the keys {sorted(expected)}")
        try:
            atoms = [(vec, prob) for vec, prob in data["atoms"]]
        except (TypeError, ValueError):
            raise InvalidJoint("atoms must be a list of [values, prob] pairs") from None
        return cls(data["cond_vars"], data["target_vars"], atoms)

    @classmethod
    def from_json(cls, text: str | bytes) -> FiniteJoint:
        return cls.from_dict(json.loads(text))


# -- operations ---------------------------------------------------------------


def marginal(joint: FiniteJoint, vars: Iterable[str]) -> FiniteJoint:
    """Sum out every variable not in ``vars``.

    Kept variables retain their role (conditioning or target) and their order
    in ``joint``; coinciding projected value vectors are merged.
    """
    keep = set(vars)
    if not keep:
        raise ValueError("marginal needs at least one variable to keep")
    for name in keep:
        joint.index_of(name)
    cols = [i for i, name in enumerate(joint.variables) if name in keep]
    cond = [v for v in joint.cond_vars if v in keep]
    target = [v for v in joint.target_vars if v in keep]
    if len(cols) == len(joint.variables):
        return joint
    values, probs = _canonicalize(joint.values[:, cols], joint.probs.copy(), merge=True)
    return FiniteJoint._trusted(cond, target, values, probs)


def _prefix_tuple(joint: FiniteJoint, prefix: Sequence[float] | Mapping[str, float]) -> tuple[float, ...]:
    if isinstance(prefix, Mapping):
        j = len(prefix)
        if j > joint.k:
            raise UnknownVariable(f"prefix of length {j} exceeds the chain length {joint.k}")
        for name in prefix:
            if name not in joint.cond_vars[:j]:
                joint.index_of(name)
                raise UnknownVariable(f"{name!r} is not among the first {j} conditioning variables")
        return tuple(float(prefix[name]) for name in joint.cond_vars[:j])
    prefix = tuple(float(v) for v in prefix)
    if len(prefix) > joint.k:
        raise UnknownVariable(f"prefix of length {len(prefix)} exceeds the chain length {joint.k}")
    return prefix


def prefix_probability(joint: FiniteJoint, prefix: Sequence[float] | Mapping[str, float]) -> float:
    """Marginal probability ``P(X_1 = x_1, ..., X_j = x_j)``."""
    pre = _prefix_tuple(joint, prefix)
    if not pre:
        return 1.0
    mask = np.all(joint.values[:, : len(pre)] == np.array(pre), axis=1)
    return math.fsum(joint.probs[mask].tolist())


def condition(joint: FiniteJoint, prefix: Sequence[float] | Mapping[str, float]) -> FiniteJoint:
    """Condition on ``X_1 = x_1, ..., X_j = x_j``.

    The result is a joint over the remaining chain ``X_{j+1} .. X_k`` and the
    targets.
    """
    pre = _prefix_tuple(joint, prefix)
    j = len(pre)
    if j == 0:
        return joint
    mask = np.all(joint.values[:, :j] == np.array(pre), axis=1)
    block = joint.probs[mask]
    mass = math.fsum(block.tolist())
    if mass <= 0.0:
        named = ", ".join(f"{n}={v!r}" for n, v in zip(joint.cond_vars, pre))
        raise ZeroProbabilityEvent(f"P({named}) = 0")
    return FiniteJoint._trusted(joint.cond_vars[j:], joint.target_vars, joint.values[mask, j:], block / mass)


def expect(joint: FiniteJoint, u: ScalarFunction) -> float:
    """``E[u(Y)]``: probability-weighted sum of ``u`` over the target values."""
    targets = joint.values[:, joint.k :].tolist()
    return math.fsum(prob * float(u(tuple(y))) for y, prob in zip(targets, joint.probs.tolist()))


def _require_p(joint: FiniteJoint, p: int, what: str) -> None:
    if joint.p != p:
        raise ArityError(f"{what} needs {p} target variable(s), joint has {joint.p}")


def covariance_direct(joint: FiniteJoint) -> float:
    """Product-moment covariance ``E(Y1 Y2) - E(Y1) E(Y2)``."""
    _require_p(joint, 2, "covariance_direct")
    w = joint.probs
    y1 = joint.target_column(0)
    y2 = joint.target_column(1)
    e12 = math.fsum((w * (y1 * y2)).tolist())
    e1 = math.fsum((w * y1).tolist())
    e2 = math.fsum((w * y2).tolist())
    return e12 - e1 * e2


def variance_direct(joint: FiniteJoint) -> float:
    """``sum p y^2 - (sum p y)^2`` for a single-target joint."""
    _require_p(joint, 1, "variance_direct")
    w = joint.probs
    y = joint.target_column(0)
    return math.fsum((w * y * y).tolist()) - math.fsum((w * y).tolist()) ** 2


def conditional_mean_table(joint: FiniteJoint, target: str | int, depth: int) -> dict[tuple[float, ...], float]:
    """Map every positive-probability ``depth``-prefix to ``E[target | prefix]``.

    ``depth = 0`` yields a single entry keyed by ``()``.
    """
    keys, _, means = prefix_means(joint, depth, target)
    return dict(zip(keys, means.tolist()))


def prefix_means(joint: FiniteJoint, depth: int, target: str | int) -> tuple[list[tuple[float, ...]], np.ndarray, np.ndarray]:
    """Prefix keys, their marginal masses, and the conditional means of ``target``."""
    y = joint.target_column(target)
    starts = joint.group_starts(depth)
    mass = block_fsum(joint.probs, starts)
    means = block_fsum(joint.probs * y, starts) / mass
    keys = [tuple(row) for row in joint.values[starts, :depth].tolist()]
    return keys, mass, means


def block_fsum(x: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Correctly rounded sum of each contiguous block; independent of order within a block."""
    bounds = np.append(starts, len(x)).tolist()
    values = x.tolist()
    return np.array([math.fsum(values[s:e]) for s, e in zip(bounds[:-1], bounds[1:])])


def duplicate_target(joint: FiniteJoint) -> FiniteJoint:
    """Turn a single-target joint over ``Y`` into one over ``(Y, Y)``."""
    _require_p(joint, 1, "duplicate_target")
    name = joint.target_vars[0]
    twin = f"{name}'"
    while twin in joint.variables:
        twin += "'"
    values = np.column_stack([joint.values, joint.values[:, -1]])
    return FiniteJoint._trusted(joint.cond_vars, (name, twin), values, joint.probs)


def with_targets(joint: FiniteJoint, target_vars: Sequence[str]) -> FiniteJoint:
    """Reorder or select targets, e.g. ``with_targets(j, ["y2", "y1"])`` swaps them."""
    cols = list(range(joint.k)) + [joint.index_of(name) for name in target_vars]
    for name in target_vars:
        if name not in joint.target_vars:
            raise UnknownVariable(f"{name!r} is not a target of this joint")
    values, probs = _canonicalize(joint.values[:, cols], joint.probs.copy(), merge=True)
    return FiniteJoint._trusted(joint.cond_vars, target_vars, values, probs)
