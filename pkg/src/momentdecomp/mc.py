"""Seeded Monte Carlo estimates of the covariance decomposition terms.

A :class:`SamplerChain` supplies vectorized samplers for each level and for
the leaf, plus a :class:`MomentOracle` with exact conditional moments. Term
estimators are Rao-Blackwellized: they never nest sampling inside sampling,
they plug exact conditional means into the inner covariance.

For term ``i <= k`` each outer sample draws a prefix ``x_1..x_{i-1}``, then
``n_inner`` values of ``X_i`` from it, and takes the unbiased (``n - 1``)
sample covariance of the oracle means ``(m_1, m_2)`` at those depth-``i``
prefixes. Term ``k + 1`` averages the oracle's leaf covariance over full
prefixes. The standard error is the sample standard deviation of the
per-outer values over ``sqrt(n_outer)``.

Sampler signatures::

    level_i(prefix: (n, i - 1) array, rng) -> (n,) array of X_i draws
    leaf(prefix: (n, k) array, rng)        -> (n, p) array of target draws
    oracle.means[i](prefix: (n, i) array)  -> (n, p) array of E[Y_a | prefix]
    oracle.cov(prefix: (n, k) array)       -> (n,) array of Cov(Y_1, Y_2 | prefix)

With one target, ``Y_2`` is ``Y_1`` and ``oracle.cov`` returns the conditional
variance.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .decomp import decompose_covariance, decompose_variance
from .errors import OracleUndefined
from .joint import FiniteJoint, condition, covariance_direct, prefix_means, variance_direct
from . import rng as rng_mod

LevelSampler = Callable[[np.ndarray, np.random.Generator], np.ndarray]
LeafSampler = Callable[[np.ndarray, np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class MomentOracle:
    means: Mapping[int, Callable[[np.ndarray], np.ndarray]] = field(default_factory=dict)
    cov: Callable[[np.ndarray], np.ndarray] | None = None


@dataclass(frozen=True)
class SamplerChain:
    levels: tuple[LevelSampler, ...]
    leaf: LeafSampler
    oracle: MomentOracle
    p: int = 2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        rng_mod.check_seed(self.seed)
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")

    @property
    def k(self) -> int:
        return len(self.levels)

    def with_seed(self, seed: int) -> SamplerChain:
        return replace(self, seed=seed)


@dataclass(frozen=True)
class McEstimate:
    term: int | str
    estimate: float
    se: float
    n_outer: int
    n_inner: int
    seed: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "term": self.term,
            "estimate": self.estimate,
            "se": self.se,
            "n_outer": self.n_outer,
            "n_inner": self.n_inner,
            "seed": self.seed,
        }

    def covers(self, exact: float, z: float = 3.0, slack: float = 1e-12) -> bool:
        """``|estimate - exact| <= z * se`` up to ``slack`` of float noise."""
        return abs(self.estimate - exact) <= z * self.se + slack


def _mean_and_se(values: np.ndarray) -> tuple[float, float]:
    # shift by the first value so constant inputs give exactly (c, 0)
    shift = float(values[0])
    d = values - shift
    n = len(d)
    mean_d = math.fsum(d.tolist()) / n
    dev = d - mean_d
    var = math.fsum((dev * dev).tolist()) / (n - 1)
    return shift + mean_d, math.sqrt(var / n)


def _row_covariance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unbiased sample covariance along axis 1."""
    a = a - a[:, :1]
    b = b - b[:, :1]
    da = a - a.mean(axis=1, keepdims=True)
    db = b - b.mean(axis=1, keepdims=True)
    return (da * db).sum(axis=1) / (a.shape[1] - 1)


def sample_prefix(chain: SamplerChain, depth: int, n: int, gen: np.random.Generator) -> np.ndarray:
    prefix = np.empty((n, 0))
    for sampler in chain.levels[:depth]:
        draws = np.asarray(sampler(prefix, gen), dtype=float).reshape(n)
        prefix = np.column_stack([prefix, draws])
    return prefix


def estimate_term(chain: SamplerChain, i: int, n_outer: int, n_inner: int = 2) -> McEstimate:
    """Monte Carlo estimate of covariance term ``i`` (``1 <= i <= k + 1``)."""
    k = chain.k
    if not 1 <= i <= k + 1:
        raise IndexError(f"term index {i} outside 1..{k + 1}")
    if n_outer < 2:
        raise ValueError("n_outer must be at least 2")
    if i <= k:
        if n_inner < 2:
            raise ValueError("n_inner must be at least 2")
        mean_fn = chain.oracle.means.get(i)
        if mean_fn is None:
            raise OracleUndefined(f"term {i} needs conditional means at depth {i}")
    elif chain.oracle.cov is None:
        raise OracleUndefined(f"term {i} needs the leaf conditional covariance")

    parts = []
    for start, n in rng_mod.chunks(n_outer):
        gen = rng_mod.stream(chain.seed, i, start)
        if i <= k:
            outer = sample_prefix(chain, i - 1, n, gen)
            inner = np.repeat(outer, n_inner, axis=0)
            xi = np.asarray(chain.levels[i - 1](inner, gen), dtype=float).reshape(-1)
            means = np.asarray(mean_fn(np.column_stack([inner, xi])), dtype=float)
            means = means.reshape(n, n_inner, chain.p)
            parts.append(_row_covariance(means[:, :, 0], means[:, :, -1]))
        else:
            prefix = sample_prefix(chain, k, n, gen)
            parts.append(np.asarray(chain.oracle.cov(prefix), dtype=float).reshape(n))
    estimate, se = _mean_and_se(np.concatenate(parts))
    return McEstimate(i, estimate, se, n_outer, n_inner if i <= k else 0, chain.seed)


def estimate_total(chain: SamplerChain, n: int) -> McEstimate:
    """Plug-in product-moment covariance over ``n`` full-chain draws.

    The standard error is the delta-method value ``sqrt((m22 - cov**2) / n)``
    with ``m22`` the sample mean of squared-deviation products.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    draws = []
    for start, count in rng_mod.chunks(n):
        gen = rng_mod.stream(chain.seed, 0, start)
        prefix = sample_prefix(chain, chain.k, count, gen)
        draws.append(np.asarray(chain.leaf(prefix, gen), dtype=float).reshape(count, chain.p))
    y = np.concatenate(draws)
    a = y[:, 0] - y[0, 0]
    b = y[:, -1] - y[0, -1]
    mean_a = math.fsum(a.tolist()) / n
    mean_b = math.fsum(b.tolist()) / n
    cov = math.fsum((a * b).tolist()) / n - mean_a * mean_b
    m22 = math.fsum((((a - mean_a) * (b - mean_b)) ** 2).tolist()) / n
    se = math.sqrt(max(m22 - cov * cov, 0.0) / n)
    return McEstimate("total", cov, se, n, 0, chain.seed)


# -- exact-model wrapper ----------------------------------------------------------------


class _PrefixIndex:
    """Maps prefix value rows of a FiniteJoint to block ids at each depth."""

    def __init__(self, joint: FiniteJoint):
        self.k = joint.k
        self.supports = [np.unique(joint.values[:, j]) for j in range(joint.k)]
        blocks = [np.searchsorted(joint.group_starts(d), np.arange(len(joint)), side="right") - 1 for d in range(joint.k + 1)]
        self.masses = [np.bincount(b, weights=joint.probs) for b in blocks]
        self.child: list[np.ndarray] = []
        self.cdf: list[np.ndarray] = []
        for d in range(joint.k):
            starts = joint.group_starts(d + 1)
            parents = blocks[d][starts]
            s = np.searchsorted(self.supports[d], joint.values[starts, d])
            child = np.full((len(self.masses[d]), len(self.supports[d])), -1, dtype=np.intp)
            prob = np.zeros(child.shape)
            child[parents, s] = np.arange(len(starts))
            prob[parents, s] = self.masses[d + 1] / self.masses[d][parents]
            cdf = np.cumsum(prob, axis=1)
            last = prob.shape[1] - 1 - np.argmax(prob[:, ::-1] > 0, axis=1)
            cdf[np.arange(cdf.shape[1])[None, :] >= last[:, None]] = 1.0
            self.child.append(child)
            self.cdf.append(cdf)

    def lookup(self, prefix: np.ndarray) -> np.ndarray:
        prefix = np.asarray(prefix, dtype=float)
        ids = np.zeros(len(prefix), dtype=np.intp)
        for j in range(prefix.shape[1]):
            support = self.supports[j]
            s = np.clip(np.searchsorted(support, prefix[:, j]), 0, len(support) - 1)
            ids = np.where(support[s] == prefix[:, j], self.child[j][ids, s], -1)
            if np.any(ids < 0):
                raise ValueError("prefix outside the joint's positive-probability support")
        return ids

    def sample(self, depth: int, prefix: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        ids = self.lookup(prefix)
        u = 1.0 - gen.random(len(ids))
        s = (self.cdf[depth][ids] < u[:, None]).sum(axis=1)
        return self.supports[depth][s]


def wrap_exact(joint: FiniteJoint, seed: int = 0) -> SamplerChain:
    """Inverse-CDF samplers and exact moment oracles for a finite joint."""
    index = _PrefixIndex(joint)
    k, p = joint.k, joint.p

    levels = [lambda prefix, gen, d=d: index.sample(d, prefix, gen) for d in range(k)]

    means = {}
    for depth in range(1, k + 1):
        table = np.column_stack([prefix_means(joint, depth, a)[2] for a in range(p)])
        means[depth] = lambda prefix, table=table: table[index.lookup(prefix)]

    keys = [tuple(row) for row in joint.values[joint.group_starts(k), :k].tolist()]
    leaf_moment = covariance_direct if p == 2 else variance_direct
    cov_table = np.array([leaf_moment(condition(joint, key)) for key in keys])

    starts = joint.group_starts(k)
    ends = np.append(starts[1:], len(joint))
    width = int((ends - starts).max())
    leaf_values = np.zeros((len(starts), width, p))
    leaf_cdf = np.ones((len(starts), width))
    for b, (s, e) in enumerate(zip(starts.tolist(), ends.tolist())):
        q = joint.probs[s:e] / joint.probs[s:e].sum()
        leaf_values[b, : e - s] = joint.values[s:e, k:]
        leaf_cdf[b, : e - s - 1] = np.cumsum(q)[:-1]

    def leaf(prefix, gen):
        ids = index.lookup(prefix)
        u = 1.0 - gen.random(len(ids))
        pick = (leaf_cdf[ids] < u[:, None]).sum(axis=1)
        return leaf_values[ids, pick]

    oracle = MomentOracle(means=means, cov=lambda prefix: cov_table[index.lookup(prefix)])
    return SamplerChain(tuple(levels), leaf, oracle, p=p, seed=seed)


def estimate_all(chain: SamplerChain, n_outer: int, n_inner: int) -> list[McEstimate]:
    return [estimate_term(chain, i, n_outer, n_inner) for i in range(1, chain.k + 2)]


def exact_targets(joint: FiniteJoint) -> Sequence[float]:
    """Exact terms matching :func:`estimate_term` on ``wrap_exact(joint)``."""
    return (decompose_covariance(joint) if joint.p == 2 else decompose_variance(joint)).terms
