import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from momentdecomp.decomp import (
    OperatorGrid,
    cov_term_collapsed,
    cov_term_literal,
    decompose_covariance,
    decompose_variance,
    grid_term_eval,
    iterated_expectation,
    term_label,
)
from momentdecomp.errors import ArityError
from momentdecomp.fuzz import FuzzConfig, random_joint
from momentdecomp.joint import FiniteJoint, covariance_direct, duplicate_target, expect, with_targets


def fuzzed(k, p, seed, zero_fraction=0.0):
    return random_joint(FuzzConfig(k=k, p=p, seed=seed, zero_fraction=zero_fraction))


class TestFixtures:
    def test_example_b(self, example_b):
        dec = decompose_covariance(example_b)
        assert dec.terms == (-0.25, 0.0)
        assert dec.total_direct == -0.25
        assert dec.residual <= 1e-12
        assert oracles.direct_cov(example_b.atoms, 1, 2) == Fraction(-1, 4)

    def test_example_b_literal(self, example_b):
        assert [cov_term_literal(example_b, i) for i in (1, 2)] == [-0.25, 0.0]

    def test_example_c_variance(self, example_c):
        dec = decompose_variance(example_c)
        assert dec.terms == (0.5625, 0.1875, 0.0)
        assert dec.total_direct == 0.75
        assert dec.residual <= 1e-12
        assert dec.grid_terms == (0.5625, 0.1875, 0.0)

    def test_example_c_literal_on_twin(self, example_c):
        twin = duplicate_target(example_c)
        assert [cov_term_literal(twin, i) for i in (1, 2, 3)] == [0.5625, 0.1875, 0.0]

    def test_example_c_three_term_display(self, example_c):
        assert oracles.k2_three_term(example_c.atoms) == [Fraction(9, 16), Fraction(3, 16), Fraction(0)]

    def test_example_c_grid_rows(self, example_c):
        grid = OperatorGrid(2)
        assert [grid_term_eval(example_c, grid, i) for i in (1, 2, 3)] == [0.5625, 0.1875, 0.0]

    def test_iterated_expectation(self, example_c):
        assert iterated_expectation(example_c, lambda y: 1.0) == 1.0
        assert iterated_expectation(example_c, lambda y: y[0]) == 1.0

    def test_claims_fixture(self, fixtures_dir):
        from momentdecomp.model import compile_model, load_model

        joint = compile_model(load_model(fixtures_dir / "claims.json"))[0]
        dec = decompose_covariance(joint)
        expected = oracles.cov_terms(joint.atoms, 3, 3, 4)
        assert all(abs(a - float(b)) <= 1e-12 for a, b in zip(dec.terms, expected))
        assert dec.residual <= 1e-10


class TestDegenerate:
    def test_constant_targets(self):
        j = FiniteJoint(["x1", "x2"], ["y1", "y2"], {(0, 0, 2, 3): 0.2, (0, 1, 2, 3): 0.3, (1, 1, 2, 3): 0.5})
        dec = decompose_covariance(j)
        assert dec.terms == (0.0, 0.0, 0.0) and dec.total_direct == 0.0 and dec.residual == 0.0

    def test_independent_targets_kill_outer_terms(self):
        xs = {(0, 0): 0.1, (0, 1): 0.2, (1, 0): 0.3, (1, 1): 0.4}
        ys = {(0, 1): 0.25, (1, 0): 0.25, (1, 1): 0.5}
        atoms = {x + y: px * py for x, px in xs.items() for y, py in ys.items()}
        dec = decompose_covariance(FiniteJoint(["x1", "x2"], ["y1", "y2"], atoms))
        assert all(abs(t) <= 1e-15 for t in dec.terms[:2])
        assert abs(dec.terms[2] - dec.total_direct) <= 1e-15

    def test_deterministic_leaf_last_term_zero(self):
        j = fuzzed(3, 1, 4)
        # collapse the leaf onto a function of the prefix
        atoms = {}
        for vec, p in j.atoms:
            key = vec[:3] + (vec[0] * vec[1] - vec[2],)
            atoms[key] = atoms.get(key, 0.0) + p
        dec = decompose_variance(FiniteJoint(j.cond_vars, j.target_vars, atoms))
        assert dec.terms[-1] == 0.0

    def test_empty_chain(self):
        j = FiniteJoint([], ["y1", "y2"], {(0, 1): 0.5, (1, 0): 0.5})
        dec = decompose_covariance(j)
        assert dec.terms == (-0.25,) and dec.residual == 0.0
        assert iterated_expectation(j, lambda y: y[0] + 3 * y[1]) == expect(j, lambda y: y[0] + 3 * y[1])

    def test_errors(self, example_b, example_c):
        with pytest.raises(ArityError):
            decompose_covariance(example_c)
        with pytest.raises(ArityError):
            cov_term_literal(example_c, 1)
        with pytest.raises(ArityError):
            decompose_variance(example_b)
        with pytest.raises(ArityError):
            grid_term_eval(example_b, OperatorGrid(1), 1)
        for bad in (0, 3):
            with pytest.raises(IndexError):
                cov_term_collapsed(example_b, bad)
            with pytest.raises(IndexError):
                cov_term_literal(example_b, bad)
        with pytest.raises(IndexError):
            grid_term_eval(example_c, OperatorGrid(2), 4)
        with pytest.raises(IndexError):
            OperatorGrid(2)[0, 1]


class TestOperatorGrid:
    @pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
    def test_one_variance_per_row(self, k):
        grid = OperatorGrid(k)
        for i in range(1, k + 2):
            row = grid.row(i)
            assert row.count("V") == 1 and row[i - 1] == "V" and len(row) == k + 1
        assert len(grid.entries) == (k + 1) ** 2

    def test_render(self):
        assert OperatorGrid(2).render_row(2, ["x1", "x2"]) == "E_{x1}[V_{x2|x1}[E_{Y|x1,x2}(Y)]]"

    def test_grid_mismatch(self, example_c):
        with pytest.raises(ValueError):
            grid_term_eval(example_c, OperatorGrid(1), 1)


class TestLabels:
    def test_display_order(self):
        names = ["x1", "x2"]
        assert term_label(1, names, "var") == "Var at level 1 of conditional means E[Y | x1]"
        assert term_label(2, names, "var") == "E over x1 of Var at level 2 of conditional means E[Y | x1,x2]"
        assert term_label(3, names, "cov") == "E over x1,x2 of within-leaf Cov(Y | x1,x2)"
        assert term_label(1, [], "cov") == "Cov of Y"


class TestAgainstOracles:
    @pytest.mark.parametrize("seed", range(40))
    def test_k1_classical_law(self, seed):
        j = fuzzed(1, 2, seed, zero_fraction=(0.0, 0.3)[seed % 2])
        between, within = oracles.k1_classical(j.atoms)
        dec = decompose_covariance(j)
        assert abs(dec.terms[0] - float(between)) <= 1e-12
        assert abs(dec.terms[1] - float(within)) <= 1e-12

    @pytest.mark.parametrize("seed", range(40))
    def test_k2_three_term_expansion(self, seed):
        j = fuzzed(2, 1, seed, zero_fraction=(0.0, 0.3, 0.5)[seed % 3])
        expected = oracles.k2_three_term(j.atoms)
        dec = decompose_variance(j)
        assert all(abs(a - float(b)) <= 1e-12 for a, b in zip(dec.terms, expected))

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    @pytest.mark.parametrize("seed", range(10))
    def test_every_term_exact(self, k, seed):
        j = fuzzed(k, 2, 1000 * k + seed, zero_fraction=(0.0, 0.3, 0.5)[seed % 3])
        exact = oracles.cov_terms(j.atoms, k, k, k + 1)
        dec = decompose_covariance(j)
        assert all(abs(a - float(b)) <= 1e-12 for a, b in zip(dec.terms, exact))
        assert abs(dec.total_direct - float(oracles.direct_cov(j.atoms, k, k + 1))) <= 1e-12
        # exact rational check of the identity itself
        assert sum(exact) == oracles.direct_cov(j.atoms, k, k + 1)


@st.composite
def cov_joints(draw):
    k = draw(st.integers(1, 4))
    return random_joint(
        FuzzConfig(k=k, p=2, seed=draw(st.integers(0, 2**40)), zero_fraction=draw(st.sampled_from([0.0, 0.3, 0.5])))
    )


@settings(max_examples=80, deadline=None)
@given(cov_joints())
def test_swap_symmetry_is_exact(joint):
    swapped = with_targets(joint, list(reversed(joint.target_vars)))
    assert decompose_covariance(swapped) == decompose_covariance(joint)
    assert [cov_term_literal(swapped, i) for i in range(1, joint.k + 2)] == [
        cov_term_literal(joint, i) for i in range(1, joint.k + 2)
    ]
    assert covariance_direct(swapped) == covariance_direct(joint)


@settings(max_examples=80, deadline=None)
@given(cov_joints())
def test_variance_terms_nonnegative(joint):
    for name in joint.target_vars:
        from momentdecomp.joint import marginal

        single = marginal(joint, joint.cond_vars + (name,))
        dec = decompose_variance(single)
        assert min(dec.terms) >= -1e-10
        assert dec.terms == decompose_covariance(duplicate_target(single)).terms


@settings(max_examples=80, deadline=None)
@given(cov_joints())
def test_literal_matches_collapsed(joint):
    for i in range(1, joint.k + 2):
        assert math.isclose(cov_term_literal(joint, i), cov_term_collapsed(joint, i), rel_tol=0, abs_tol=1e-10)
