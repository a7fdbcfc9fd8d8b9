"""Random joints and chain models for property checks, plus the trial runner.

Supports are distinct integers from ``value_range`` so conditional means are
sums of small-denominator rationals and tolerance failures point at math
errors rather than float noise.
"""

from __future__ import annotations

import json
import os
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .decomp import (
    OperatorGrid,
    cov_term_literal,
    decompose_covariance,
    decompose_variance,
    grid_term_eval,
    iterated_expectation,
)
from .errors import MomentDecompError
from .expr import parse_expr, unparse
from .joint import FiniteJoint, expect, with_targets
from .model import Bernoulli, Categorical, ChainModel, LeafSpec, LevelSpec, compile_model, model_to_dict


@dataclass(frozen=True)
class FuzzConfig:
    k: int = 2
    support_sizes: tuple[int, ...] | None = None  # k + p entries; None draws each from 2..4
    p: int = 2
    value_range: tuple[int, int] = (-3, 3)
    zero_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.k <= 4:
            raise ValueError("k must be in 1..4")
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        lo, hi = self.value_range
        if self.support_sizes is not None:
            if len(self.support_sizes) != self.k + self.p:
                raise ValueError(f"need {self.k + self.p} support sizes")
            if any(not 2 <= s <= 4 for s in self.support_sizes):
                raise ValueError("support sizes must be in 2..4")
            if max(self.support_sizes) > hi - lo + 1:
                raise ValueError("value range too small for the support sizes")
        if not 0.0 <= self.zero_fraction < 1.0:
            raise ValueError("zero_fraction must be in [0, 1)")


def _rng(cfg: FuzzConfig) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, cfg.k, cfg.p]))


def resolve_sizes(cfg: FuzzConfig) -> FuzzConfig:
    """Fill in random support sizes so the config replays exactly."""
    if cfg.support_sizes is not None:
        return cfg
    gen = np.random.default_rng(np.random.SeedSequence([cfg.seed, cfg.k, cfg.p, 1]))
    return replace(cfg, support_sizes=tuple(int(s) for s in gen.integers(2, 5, size=cfg.k + cfg.p)))


def random_joint(cfg: FuzzConfig) -> FiniteJoint:
    """Random joint on a product of integer supports.

    Each atom's weight is a product of ``k + p`` independent uniform(0, 1)
    draws; a ``zero_fraction`` of atoms is then zeroed and the rest renormalized.
    """
    cfg = resolve_sizes(cfg)
    gen = _rng(cfg)
    lo, hi = cfg.value_range
    pool = np.arange(lo, hi + 1, dtype=float)
    supports = [np.sort(gen.choice(pool, size=s, replace=False)) for s in cfg.support_sizes]
    grid = np.array(list(product(*supports)))
    weights = gen.random((len(grid), cfg.k + cfg.p)).prod(axis=1)
    n_zero = int(cfg.zero_fraction * len(grid))
    if n_zero:
        weights[gen.choice(len(grid), size=n_zero, replace=False)] = 0.0
    weights = weights / weights.sum()
    cond = [f"x{i}" for i in range(1, cfg.k + 1)]
    target = ["y1", "y2"][: cfg.p] if cfg.p == 2 else ["y"]
    return FiniteJoint(cond, target, zip(grid.tolist(), weights.tolist()))


def _affine(gen: np.random.Generator, parents: Sequence[str]) -> str:
    """Clamped affine expression in the parents, e.g. ``min(0.95, max(0.05, 0.3 + 0.1*x1))``."""
    text = f"{gen.uniform(0.1, 0.9):.2f}"
    for name in parents:
        coef = gen.uniform(-0.3, 0.3)
        text += f" {'-' if coef < 0 else '+'} {abs(coef):.2f}*{name}"
    return f"min(0.95, max(0.05, {text}))"


def random_chain_model(cfg: FuzzConfig) -> ChainModel:
    """Random bernoulli/categorical chain with affine, clamped parameters.

    Categorical probabilities are clamped weights divided by their sum, so
    every reachable prefix yields a valid distribution.
    """
    cfg = resolve_sizes(cfg)
    gen = _rng(cfg)
    lo, hi = cfg.value_range
    pool = np.arange(lo, hi + 1)
    levels = []
    names: list[str] = []
    for i in range(cfg.k):
        name = f"x{i + 1}"
        size = cfg.support_sizes[i]
        if size == 2 and gen.random() < 0.5:
            dist = Bernoulli(parse_expr(_affine(gen, names), names))
        else:
            values = tuple(float(v) for v in np.sort(gen.choice(pool, size=size, replace=False)))
            weights = [f"({_affine(gen, names)})" for _ in range(size)]
            total = " + ".join(weights)
            probs = tuple(parse_expr(f"{w} / ({total})", names) for w in weights)
            dist = Categorical(values, probs)
        levels.append(LevelSpec(name, dist))
        names.append(name)

    targets = ("y1", "y2") if cfg.p == 2 else ("y",)
    n_atoms = int(np.prod(cfg.support_sizes[cfg.k :]))
    weights = [f"({_affine(gen, names)})" for _ in range(n_atoms)]
    total = " + ".join(weights)
    atoms = []
    for a in range(n_atoms):
        vec = []
        for _ in targets:
            c0 = int(gen.integers(lo, hi + 1))
            parent = names[int(gen.integers(len(names)))]
            c1 = int(gen.integers(-1, 2))
            vec.append(parse_expr(f"{c0} + {c1}*{parent}", names))
        atoms.append((tuple(vec), parse_expr(f"{weights[a]} / ({total})", names)))
    return ChainModel(tuple(levels), LeafSpec(targets, expr_atoms=tuple(atoms)))


# -- checks ----------------------------------------------------------------------------

TOL = 1e-10


def check_covariance(joint: FiniteJoint, tol: float = TOL) -> list[str]:
    """Residual, tower equivalence, swap symmetry and iterated expectation for a p=2 joint."""
    problems = []
    dec = decompose_covariance(joint)
    if not dec.residual <= tol:
        problems.append(f"residual {dec.residual:.3e}")
    for i, collapsed in enumerate(dec.terms, start=1):
        literal = cov_term_literal(joint, i)
        if not abs(literal - collapsed) <= tol:
            problems.append(f"term {i}: literal {literal!r} vs collapsed {collapsed!r}")
    swapped = decompose_covariance(with_targets(joint, joint.target_vars[::-1]))
    if swapped.terms != dec.terms:
        problems.append("decomposition changes when the targets are swapped")
    for name, u in (("y1", lambda y: y[0]), ("y1*y2", lambda y: y[0] * y[1]), ("y1^2", lambda y: y[0] ** 2)):
        gap = abs(iterated_expectation(joint, u) - expect(joint, u))
        if not gap <= tol:
            problems.append(f"iterated expectation of {name}: gap {gap:.3e}")
    return problems


def check_variance(joint: FiniteJoint, tol: float = TOL) -> list[str]:
    problems = []
    try:
        dec = decompose_variance(joint, tol=tol)
    except MomentDecompError as exc:
        return [str(exc)]
    if not dec.residual <= tol:
        problems.append(f"residual {dec.residual:.3e}")
    if min(dec.terms) < -tol:
        problems.append(f"negative variance term {min(dec.terms)!r}")
    grid = OperatorGrid(joint.k)
    for i, term in enumerate(dec.terms, start=1):
        gap = abs(grid_term_eval(joint, grid, i) - term)
        if not gap <= tol:
            problems.append(f"term {i}: grid gap {gap:.3e}")
    return problems


def check_joint(joint: FiniteJoint, tol: float = TOL) -> list[str]:
    return check_covariance(joint, tol) if joint.p == 2 else check_variance(joint, tol)


# -- trial runner ----------------------------------------------------------------------


@dataclass
class TrialReport:
    trials: int = 0
    passed: int = 0
    failures: list[tuple[FuzzConfig, list[str]]] = field(default_factory=list)
    smallest: FuzzConfig | None = None

    @property
    def failed(self) -> int:
        return len(self.failures)


def trial_config(master_seed: int, index: int, k: int | None = None, p: int = 2, zero_fraction: float | None = None) -> FuzzConfig:
    gen = np.random.default_rng(np.random.SeedSequence([master_seed, index]))
    seed = int(gen.integers(0, 2**63))
    trial_k = k if k is not None else 1 + index % 4
    zf = zero_fraction if zero_fraction is not None else (0.0, 0.3, 0.5)[index % 3]
    return FuzzConfig(k=trial_k, p=p, zero_fraction=zf, seed=seed)


def shrink(cfg: FuzzConfig, fails: Callable[[FuzzConfig], bool], max_steps: int = 100) -> FuzzConfig:
    """Reduce support sizes toward 2 while the failure persists."""
    cfg = resolve_sizes(cfg)
    steps = 0
    improved = True
    while improved and steps < max_steps:
        improved = False
        for pos, size in enumerate(cfg.support_sizes):
            if size <= 2 or steps >= max_steps:
                continue
            sizes = list(cfg.support_sizes)
            sizes[pos] = size - 1
            candidate = replace(cfg, support_sizes=tuple(sizes))
            steps += 1
            if fails(candidate):
                cfg = candidate
                improved = True
    return cfg


def run_trials(
    trials: int,
    master_seed: int = 0,
    k: int | None = None,
    p: int = 2,
    tol: float = TOL,
    dump_dir: str | None = None,
    models: bool = False,
) -> TrialReport:
    """Run ``trials`` fuzzed checks; failing artifacts are written to ``dump_dir``."""

    def build(cfg: FuzzConfig) -> FiniteJoint:
        return compile_model(random_chain_model(cfg))[0] if models else random_joint(cfg)

    def fails(cfg: FuzzConfig) -> bool:
        return bool(check_joint(build(cfg), tol))

    report = TrialReport()
    for index in range(trials):
        cfg = resolve_sizes(trial_config(master_seed, index, k, p))
        joint = build(cfg)
        problems = check_joint(joint, tol)
        report.trials += 1
        if not problems:
            report.passed += 1
            continue
        report.failures.append((cfg, problems))
        if dump_dir is not None:
            os.makedirs(dump_dir, exist_ok=True)
            stem = os.path.join(dump_dir, f"trial{index:05d}")
            with open(stem + ".joint.json", "w") as fh:
                fh.write(joint.to_json(indent=2))
            if models:
                with open(stem + ".model.json", "w") as fh:
                    json.dump(model_to_dict(random_chain_model(cfg)), fh, indent=2)
    if report.failures:
        report.smallest = shrink(report.failures[0][0], fails)
    return report


def roundtrip_exprs(model: ChainModel) -> bool:
    """True if every parameter expression re-parses from its printed form to the same AST."""
    exprs = []
    for level in model.levels:
        dist = level.dist
        exprs.extend(dist.probs if isinstance(dist, Categorical) else [dist.p])
    for vec, prob in model.leaf.expr_atoms or ():
        exprs.extend(vec)
        exprs.append(prob)
    return all(parse_expr(unparse(e)) == e for e in exprs)


__all__ = [
    "FuzzConfig",
    "TrialReport",
    "check_covariance",
    "check_joint",
    "check_variance",
    "random_chain_model",
    "random_joint",
    "resolve_sizes",
    "roundtrip_exprs",
    "run_trials",
    "shrink",
    "trial_config",
]
