"""Level-by-level decomposition of variance and covariance over a conditioning chain.

For a chain ``X_1, ..., X_k`` and targets ``(Y_1, Y_2)``, covariance splits into
``k + 1`` terms. Term ``i <= k`` is the expected covariance, across ``X_i``
given ``X_1..X_{i-1}``, of the conditional means ``E[Y_a | X_1..X_i]``; term
``k + 1`` is the expected within-leaf covariance ``E[Cov(Y_1, Y_2 | X_1..X_k)]``.
Term 1 is the outermost, term ``k + 1`` the innermost.

Two independent evaluators are provided:

* :func:`cov_term_collapsed` reads conditional means straight off prefix
  blocks of the joint table (the nested expectations already collapsed).
* :func:`cov_term_literal` walks the chain one conditional operator per
  level, nesting expectations exactly as the iterated formula is written.

Their agreement is the numerical certificate for the tower steps. Variance
terms come from duplicating the target, and are cross-checked against the
``E``/``V`` operator grid evaluated by :func:`grid_term_eval`.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ArityError, IdentityViolation
from .joint import (
    FiniteJoint,
    ScalarFunction,
    block_fsum,
    covariance_direct,
    duplicate_target,
    expect,
    prefix_means,
)

GRID_TOLERANCE = 1e-10


@dataclass(frozen=True)
class OperatorGrid:
    """Operator assignment for a chain of length ``k``: row ``i`` has ``V`` at level ``i``.

    Levels ``1..k`` are ``X_1..X_k``; level ``k + 1`` is the target given
    the whole chain.
    """

    k: int

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be non-negative")

    @property
    def size(self) -> int:
        return self.k + 1

    def __getitem__(self, ij: tuple[int, int]) -> str:
        i, j = ij
        if not (1 <= i <= self.size and 1 <= j <= self.size):
            raise IndexError(f"grid index ({i}, {j}) outside 1..{self.size}")
        return "V" if i == j else "E"

    def row(self, i: int) -> tuple[str, ...]:
        return tuple(self[i, j] for j in range(1, self.size + 1))

    @property
    def entries(self) -> dict[tuple[int, int], str]:
        return {(i, j): self[i, j] for i in range(1, self.size + 1) for j in range(1, self.size + 1)}

    def render_row(self, i: int, cond_vars=None, target: str = "Y") -> str:
        """Human-readable nested operator chain, e.g. ``E_{x1}[V_{x2|x1}[E_{Y|x1,x2}(Y)]]``."""
        names = list(cond_vars) if cond_vars is not None else [f"X{j}" for j in range(1, self.size)]
        parts = []
        for j, op in enumerate(self.row(i)):
            given = ",".join(names[:j])
            var = names[j] if j < self.k else target
            parts.append(f"{op}_{{{var}|{given}}}" if given else f"{op}_{{{var}}}")
        return "[".join(parts) + f"({target})" + "]" * (len(parts) - 1)


@dataclass(frozen=True)
class CovDecomposition:
    terms: tuple[float, ...]
    total_direct: float
    sum_terms: float
    residual: float

    @property
    def k(self) -> int:
        return len(self.terms) - 1

    def to_dict(self, target: str = "cov") -> dict[str, Any]:
        return {
            "k": self.k,
            "target": target,
            "terms": list(self.terms),
            "total_direct": self.total_direct,
            "sum_terms": self.sum_terms,
            "residual": self.residual,
        }


@dataclass(frozen=True)
class VarDecomposition(CovDecomposition):
    """Variance terms, plus the same terms evaluated through the operator grid."""

    grid_terms: tuple[float, ...] = field(default=())

    def to_dict(self, target: str = "var") -> dict[str, Any]:
        return super().to_dict(target)


def _check_cov_arity(joint: FiniteJoint) -> None:
    if joint.p != 2:
        raise ArityError(f"covariance terms need two targets, joint has {joint.p}")


def _check_index(joint: FiniteJoint, i: int) -> None:
    if not 1 <= i <= joint.k + 1:
        raise IndexError(f"term index {i} outside 1..{joint.k + 1}")


# -- iterated expectation ---------------------------------------------------------


def iterated_expectation(joint: FiniteJoint, u: ScalarFunction) -> float:
    """``E_{X_1}[E_{X_2|X_1}[ ... E_{Y|X_1..X_k}[u(Y)] ... ]]`` by recursion over levels."""
    if joint.k == 0:
        return expect(joint, u)
    return math.fsum(q * iterated_expectation(child, u) for _, q, child in joint.children())


# -- collapsed evaluator -----------------------------------------------------------


def _block_index(joint: FiniteJoint, depth: int) -> np.ndarray:
    starts = joint.group_starts(depth)
    return np.searchsorted(starts, np.arange(len(joint)), side="right") - 1


def cov_term_collapsed(joint: FiniteJoint, i: int) -> float:
    """Term ``i`` of the covariance decomposition from prefix-block conditional means."""
    _check_cov_arity(joint)
    _check_index(joint, i)
    k = joint.k
    w = joint.probs
    if i == k + 1:
        # expected within-leaf covariance, centered about each block's means
        starts = joint.group_starts(k)
        g = _block_index(joint, k)
        mass = block_fsum(w, starts)
        d = []
        for a in (0, 1):
            y = joint.target_column(a)
            d.append(y - (block_fsum(w * y, starts) / mass)[g])
        return math.fsum((w * (d[0] * d[1])).tolist())

    # conditional means at depth i, centered about their parent block at depth i - 1
    _, mass_i, m1 = prefix_means(joint, i, 0)
    _, _, m2 = prefix_means(joint, i, 1)
    parent_starts = joint.group_starts(i - 1)
    child_starts = joint.group_starts(i)
    parent = np.searchsorted(parent_starts, child_starts, side="right") - 1
    mass_parent = np.bincount(parent, weights=mass_i)
    d1 = m1 - (np.bincount(parent, weights=mass_i * m1) / mass_parent)[parent]
    d2 = m2 - (np.bincount(parent, weights=mass_i * m2) / mass_parent)[parent]
    # sum_parent P(parent) * sum_child P(child | parent) d1 d2
    return math.fsum((mass_i * (d1 * d2)).tolist())


# -- literal evaluator -------------------------------------------------------------------


def _product_moment_cov(qs: list[float], a: list[float], b: list[float]) -> float:
    e_ab = math.fsum(q * (x * y) for q, x, y in zip(qs, a, b))
    e_a = math.fsum(q * x for q, x in zip(qs, a))
    e_b = math.fsum(q * y for q, y in zip(qs, b))
    return e_ab - e_a * e_b


def _nested_mean(node: FiniteJoint, a: int) -> float:
    """E over the remaining levels of node, innermost E_{Y|X}(Y_a)."""
    if node.k == 0:
        y = node.target_column(a)
        return math.fsum((node.probs * y).tolist())
    return math.fsum(q * _nested_mean(child, a) for _, q, child in node.children())


def cov_term_literal(joint: FiniteJoint, i: int) -> float:
    """Term ``i`` evaluated as a nested operator chain, one conditional operator per level.

    Levels above ``i`` apply conditional expectation, level ``i`` applies
    conditional covariance (product-moment form) of the two inner
    functionals, and the inner functionals are nested conditional expectations
    down to ``E[Y_a | X_1..X_k]``. For ``i = k + 1`` the inner object is the
    within-leaf covariance.
    """
    _check_cov_arity(joint)
    _check_index(joint, i)

    def outer(node: FiniteJoint, level: int) -> float:
        if level < i:
            return math.fsum(q * outer(child, level + 1) for _, q, child in node.children())
        if node.k == 0:
            return covariance_direct(node)
        kids = node.children()
        qs = [q for _, q, _ in kids]
        f1 = [_nested_mean(child, 0) for _, _, child in kids]
        f2 = [_nested_mean(child, 1) for _, _, child in kids]
        return _product_moment_cov(qs, f1, f2)

    return outer(joint, 1)


# -- operator grid -------------------------------------------------------------------


def _apply(op: str, qs: list[float], vals: list[float]) -> float:
    mean = math.fsum(q * v for q, v in zip(qs, vals))
    if op == "E":
        return mean
    return math.fsum(q * v * v for q, v in zip(qs, vals)) - mean * mean


def grid_term_eval(joint: FiniteJoint, grid: OperatorGrid, i: int) -> float:
    """Evaluate row ``i`` of ``grid`` as a literal nested ``E``/``V`` chain on a one-target joint."""
    if joint.p != 1:
        raise ArityError(f"grid terms need one target, joint has {joint.p}")
    if grid.k != joint.k:
        raise ValueError(f"grid is for k={grid.k}, joint has k={joint.k}")
    ops = grid.row(i)

    def walk(node: FiniteJoint, level: int) -> float:
        op = ops[level]
        if node.k == 0:
            return _apply(op, node.probs.tolist(), node.target_column(0).tolist())
        kids = node.children()
        return _apply(op, [q for _, q, _ in kids], [walk(child, level + 1) for _, _, child in kids])

    return walk(joint, 0)


# -- decompositions --------------------------------------------------------------------


def _assemble(terms: list[float], total: float) -> tuple[tuple[float, ...], float, float, float]:
    s = math.fsum(terms)
    return tuple(terms), total, s, abs(total - s)


def decompose_covariance(
    joint: FiniteJoint,
    evaluator: Callable[[FiniteJoint, int], float] = cov_term_collapsed,
) -> CovDecomposition:
    """All ``k + 1`` covariance terms with the direct total and the residual.

    Never raises on a large residual; judging it is the caller's job.
    """
    _check_cov_arity(joint)
    terms = [evaluator(joint, i) for i in range(1, joint.k + 2)]
    return CovDecomposition(*_assemble(terms, covariance_direct(joint)))


def decompose_variance(joint: FiniteJoint, tol: float = GRID_TOLERANCE) -> VarDecomposition:
    """Variance terms via the duplicated-target covariance path.

    The same terms are also evaluated row by row through the operator grid;
    disagreement beyond ``tol`` raises :class:`IdentityViolation`.
    """
    if joint.p != 1:
        raise ArityError(f"variance decomposition needs one target, joint has {joint.p}")
    cov = decompose_covariance(duplicate_target(joint))
    grid = OperatorGrid(joint.k)
    grid_terms = tuple(grid_term_eval(joint, grid, i) for i in range(1, grid.size + 1))
    for i, (a, b) in enumerate(zip(cov.terms, grid_terms), start=1):
        if abs(a - b) > tol:
            raise IdentityViolation(f"term {i}: covariance path {a!r} vs operator grid {b!r}")
    return VarDecomposition(cov.terms, cov.total_direct, cov.sum_terms, cov.residual, grid_terms)


def term_label(i: int, cond_vars, target: str = "cov") -> str:
    """Report label for term ``i``, e.g. ``Cov at level 2 of conditional means E[Y | x1,x2]``."""
    names = list(cond_vars)
    k = len(names)
    op = "Cov" if target == "cov" else "Var"
    if i == k + 1:
        if not k:
            return f"{op} of Y"
        return f"E over {','.join(names)} of within-leaf {op}(Y | {','.join(names)})"
    outer = f"E over {','.join(names[: i - 1])} of " if i > 1 else ""
    return f"{outer}{op} at level {i} of conditional means E[Y | {','.join(names[:i])}]"
