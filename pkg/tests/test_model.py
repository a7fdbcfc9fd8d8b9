import json
import math
from itertools import product

import pytest

from momentdecomp.errors import (
    DivisionByZero,
    InvalidDistributionSpec,
    InvalidProbability,
    ModelSyntaxError,
    SupportExplosion,
    UnknownVariableReference,
)
from momentdecomp.expr import BinOp, Num, Var
from momentdecomp.model import (
    Bernoulli,
    binomial_pmf,
    compile_model,
    load_model,
    model_from_dict,
    model_to_dict,
    parse_model,
)


def model(levels, leaf):
    return model_from_dict({"levels": levels, "leaf": leaf})


def bern(name, p):
    return {"name": name, "dist": {"kind": "bernoulli", "p": p}}


class TestParse:
    def test_minimal(self, fixtures_dir):
        m = load_model(fixtures_dir / "minimal.json")
        assert m.k == 1 and m.names == ("x1",)
        assert isinstance(m.levels[0].dist, Bernoulli)

    def test_expression_ast(self, fixtures_dir):
        m = load_model(fixtures_dir / "example_c.json")
        assert m.levels[1].dist.p == BinOp("+", Num(0.25), BinOp("*", Num(0.5), Var("x1")))

    def test_forward_reference(self):
        with pytest.raises(UnknownVariableReference, match="x2"):
            model([bern("x1", "0.5 * x2"), bern("x2", 0.5)], {"targets": ["y"], "expr_atoms": [[["x1"], 1]]})

    def test_self_reference(self):
        with pytest.raises(UnknownVariableReference):
            model([bern("x1", "x1")], {"targets": ["y"], "expr_atoms": [[["x1"], 1]]})

    def test_leaf_references_targets(self):
        with pytest.raises(UnknownVariableReference):
            model([bern("x1", 0.5)], {"targets": ["y"], "expr_atoms": [[["y"], 1]]})

    def test_malformed_json_has_position(self):
        with pytest.raises(ModelSyntaxError) as info:
            parse_model(b'{\n  "levels": [\n    {"name": "x1",,}\n  ]\n}')
        assert info.value.line == 3 and info.value.column > 1

    def test_bad_utf8(self):
        with pytest.raises(ModelSyntaxError) as info:
            parse_model(b'{"levels": []}\n\xff')
        assert (info.value.line, info.value.column) == (2, 1)

    def test_expression_error_names_location(self):
        with pytest.raises(ModelSyntaxError, match=r"levels\[0\]\.dist\.p"):
            model([bern("x1", "0.5 +")], {"targets": ["y"], "expr_atoms": [[["x1"], 1]]})

    @pytest.mark.parametrize(
        "data",
        [
            {"levels": [], "leaf": {"targets": ["y"], "expr_atoms": [[[0], 1]]}, "extra": 1},
            {"levels": [{"name": "x1", "dist": {"kind": "bernoulli", "p": 0.5, "q": 1}}], "leaf": {"targets": ["y"], "expr_atoms": [[[0], 1]]}},
            {"levels": [bern("x1", 0.5)], "leaf": {"targets": ["y"], "table": []}},
            {"levels": [bern("x1", 0.5)], "leaf": {"targets": ["y"]}},
            {"levels": [bern("x1", 0.5)], "leaf": {"targets": ["y"], "expr_atoms": [[[0], 1]], "independent": []}},
            {"levels": [{"name": "x1", "dist": {"kind": "poisson", "lam": 1}}], "leaf": {"targets": ["y"], "expr_atoms": [[[0], 1]]}},
            {"levels": [{"name": "x1", "dist": {"kind": "binomial", "n": 2.5, "p": 0.5}}], "leaf": {"targets": ["y"], "expr_atoms": [[[0], 1]]}},
            {"levels": [{"name": "x1", "dist": {"kind": "binomial", "n": -1, "p": 0.5}}], "leaf": {"targets": ["y"], "expr_atoms": [[[0], 1]]}},
            {"levels": [{"name": "x1", "dist": {"kind": "categorical", "values": [0, 0], "probs": [0.5, 0.5]}}], "leaf": {"targets": ["y"], "expr_atoms": [[[0], 1]]}},
            {"levels": [{"name": "x1", "dist": {"kind": "categorical", "values": [0, 1], "probs": [1]}}], "leaf": {"targets": ["y"], "expr_atoms": [[[0], 1]]}},
            {"levels": [bern("x1", 0.5), bern("x1", 0.5)], "leaf": {"targets": ["y"], "expr_atoms": [[[0], 1]]}},
            {"levels": [bern("min", 0.5)], "leaf": {"targets": ["y"], "expr_atoms": [[[0], 1]]}},
            {"levels": [bern("x1", 0.5)], "leaf": {"targets": ["x1"], "expr_atoms": [[[0], 1]]}},
            {"levels": [bern("x1", 0.5)], "leaf": {"targets": ["a", "b", "c"], "expr_atoms": [[[0, 0, 0], 1]]}},
            {"levels": [bern("x1", 0.5)], "leaf": {"targets": ["y1", "y2"], "expr_atoms": [[[0], 1]]}},
            {"levels": [bern("x1", 0.5)], "leaf": {"targets": ["y"], "cases": [{"when": {}, "atoms": [[[0], 1]]}]}},
        ],
    )
    def test_structural_errors(self, data):
        with pytest.raises(InvalidDistributionSpec):
            model_from_dict(data)

    def test_case_with_unknown_variable(self):
        with pytest.raises(UnknownVariableReference):
            model([bern("x1", 0.5)], {"targets": ["y"], "cases": [{"when": {"x1": 0, "z": 1}, "atoms": [[[0], 1]]}]})

    def test_dict_roundtrip(self, fixtures_dir):
        for name in ("example_b.json", "example_c.json", "example_b_cases.json", "claims.json"):
            m = load_model(fixtures_dir / name)
            again = model_from_dict(json.loads(json.dumps(model_to_dict(m))))
            assert compile_model(again)[0] == compile_model(m)[0]


class TestCompile:
    def test_example_b(self, example_b):
        assert example_b.cond_vars == ("x1",) and example_b.target_vars == ("y1", "y2")
        assert dict(example_b.atoms) == {(0.0, 0.0, 1.0): 0.5, (1.0, 1.0, 0.0): 0.5}

    def test_example_b_cases_encoding(self, fixtures_dir, example_b):
        assert compile_model(load_model(fixtures_dir / "example_b_cases.json"))[0] == example_b

    def test_example_c(self, example_c, example_c_by_hand):
        assert example_c == example_c_by_hand

    def test_report(self, fixtures_dir):
        joint, report = compile_model(load_model(fixtures_dir / "claims.json"))
        assert report.atom_count == len(joint)
        assert report.atom_count <= 3 * 2 * 5 * 3
        assert report.mass_deficit < 1e-9

    def test_order_faithful(self, fixtures_dir):
        joint, _ = compile_model(load_model(fixtures_dir / "claims.json"))
        assert joint.cond_vars == ("region", "risk", "claims")
        assert joint.target_vars == ("paid", "reserved")

    def test_probability_out_of_range(self):
        m = model([bern("x1", 0.5), bern("x2", "0.6 + 0.6*x1")], {"targets": ["y"], "expr_atoms": [[["x2"], 1]]})
        with pytest.raises(InvalidProbability, match="1.2"):
            compile_model(m)

    def test_unreachable_prefix_not_checked(self):
        # x1 is always 0, so the 1.2 branch is never evaluated
        m = model([bern("x1", 0), bern("x2", "0.5 + 0.7*x1")], {"targets": ["y"], "expr_atoms": [[["x2"], 1]]})
        joint, _ = compile_model(m)
        assert dict(joint.atoms) == {(0.0, 0.0, 0.0): 0.5, (0.0, 1.0, 1.0): 0.5}

    def test_categorical_sum(self):
        m = model(
            [{"name": "x1", "dist": {"kind": "categorical", "values": [0, 1], "probs": [0.5, 0.6]}}],
            {"targets": ["y"], "expr_atoms": [[["x1"], 1]]},
        )
        with pytest.raises(InvalidProbability, match="sum"):
            compile_model(m)

    def test_leaf_probabilities_checked(self):
        m = model([bern("x1", 0.5)], {"targets": ["y"], "expr_atoms": [[["x1"], "0.5"], [["1"], "0.6"]]})
        with pytest.raises(InvalidProbability):
            compile_model(m)

    def test_division_by_zero_surfaces(self):
        m = model([bern("x1", 0.5), bern("x2", "0.5 / x1")], {"targets": ["y"], "expr_atoms": [[["x2"], 1]]})
        with pytest.raises(DivisionByZero):
            compile_model(m)

    def test_missing_case(self):
        m = model([bern("x1", 0.5)], {"targets": ["y"], "cases": [{"when": {"x1": 0}, "atoms": [[[0], 1]]}]})
        with pytest.raises(InvalidDistributionSpec, match="no case"):
            compile_model(m)

    def test_support_explosion(self):
        levels = [{"name": f"x{i}", "dist": {"kind": "binomial", "n": 9, "p": 0.5}} for i in range(1, 5)]
        m = model(levels, {"targets": ["y"], "expr_atoms": [[["x1"], 1]]})
        with pytest.raises(SupportExplosion):
            compile_model(m, max_atoms=1000)
        assert compile_model(m)[1].atom_count == 10**4

    def test_constant_parameters_give_product(self):
        levels = [
            {"name": "a", "dist": {"kind": "categorical", "values": [-1, 0, 2], "probs": [0.2, 0.3, 0.5]}},
            bern("b", 0.3),
            {"name": "c", "dist": {"kind": "binomial", "n": 3, "p": 0.4}},
        ]
        leaf = {
            "targets": ["y1", "y2"],
            "independent": [
                {"kind": "bernoulli", "p": 0.25},
                {"kind": "categorical", "values": [5, 7], "probs": [0.9, 0.1]},
            ],
        }
        joint, _ = compile_model(model(levels, leaf))
        factors = [
            [(-1.0, 0.2), (0.0, 0.3), (2.0, 0.5)],
            [(0.0, 0.7), (1.0, 0.3)],
            [(float(j), math.comb(3, j) * 0.4**j * 0.6 ** (3 - j)) for j in range(4)],
            [(0.0, 0.75), (1.0, 0.25)],
            [(5.0, 0.9), (7.0, 0.1)],
        ]
        expected = {}
        for combo in product(*factors):
            expected[tuple(v for v, _ in combo)] = math.prod(q for _, q in combo)
        got = dict(joint.atoms)
        assert got.keys() == expected.keys()
        assert all(abs(got[key] - expected[key]) <= 1e-15 for key in expected)

    def test_independent_leaf_single_target(self):
        leaf = {"targets": ["y"], "independent": [{"kind": "binomial", "n": 2, "p": "0.5*x1"}]}
        joint, _ = compile_model(model([bern("x1", 0.5)], leaf))
        assert dict(joint.atoms) == {(0.0, 0.0): 0.5, (1.0, 0.0): 0.125, (1.0, 1.0): 0.25, (1.0, 2.0): 0.125}

    def test_coinciding_leaf_values_merge(self):
        m = model([bern("x1", 0.5)], {"targets": ["y"], "expr_atoms": [[["x1"], 0.5], [["x1"], 0.5]]})
        assert dict(compile_model(m)[0].atoms) == {(0.0, 0.0): 0.5, (1.0, 1.0): 0.5}

    def test_full_prefix_dependence(self):
        m = model(
            [bern("x1", 0.5), bern("x2", 0.5), bern("x3", "0.1 + 0.8*x1*(1 - x2)")],
            {"targets": ["y"], "expr_atoms": [[["x3"], 1]]},
        )
        joint, _ = compile_model(m)
        assert math.isclose(dict(joint.atoms)[(1.0, 0.0, 1.0, 1.0)], 0.25 * 0.9)


class TestBinomial:
    @pytest.mark.parametrize("n, p", [(0, 0.3), (1, 0.5), (5, 0.3), (20, 0.05), (40, 0.97), (200, 0.5)])
    def test_matches_closed_form(self, n, p):
        pmf = binomial_pmf(n, p)
        exact = [math.comb(n, j) * p**j * (1 - p) ** (n - j) for j in range(n + 1)]
        assert len(pmf) == n + 1
        assert all(abs(a - b) <= 1e-14 for a, b in zip(pmf, exact))
        assert abs(math.fsum(pmf) - 1.0) <= 1e-15

    def test_degenerate(self):
        assert binomial_pmf(3, 0.0) == [1.0, 0.0, 0.0, 0.0]
        assert binomial_pmf(3, 1.0) == [0.0, 0.0, 0.0, 1.0]

    def test_large_n_no_overflow(self):
        pmf = binomial_pmf(5000, 0.3)
        assert all(math.isfinite(x) for x in pmf)
        mean = math.fsum(j * q for j, q in enumerate(pmf))
        assert abs(mean - 1500.0) <= 1e-8
