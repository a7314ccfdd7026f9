import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duelbench import expr
from duelbench.errors import ConfigError, MalformedFunctionError, ParseError
from duelbench.expr import Const, GrowConfig, Leaf, Op


def rng(seed=0):
    return np.random.default_rng(seed)


@st.composite
def trees(draw, max_depth=5):
    if max_depth <= 1 or draw(st.booleans()):
        return Leaf(draw(st.integers(0, 9)))
    kind = draw(st.sampled_from(expr.OPERATOR_SET))
    arity = expr.OPERATORS[kind][0]
    return Op(kind, tuple(draw(trees(max_depth - 1)) for _ in range(arity)))


class TestEvaluate:
    def test_identity_leaf(self):
        assert expr.evaluate(Leaf(0), [2.5] + [0.0] * 9) == 2.5

    def test_safediv_fallback(self):
        f = Op("safediv", (Leaf(0), Leaf(1)))
        assert expr.evaluate(f, [3.0, 0.0] + [0.0] * 8) == 1.0
        assert expr.evaluate(f, [3.0, 1e-9] + [0.0] * 8) == 1.0
        assert expr.evaluate(f, [3.0, 2e-9] + [0.0] * 8) == pytest.approx(1.5e9)

    def test_composite(self):
        f = expr.parse("add(mul(x0,x1),neg(x2))")
        assert expr.evaluate(f, [2, 3, 5] + [0] * 7) == 1.0

    @pytest.mark.parametrize("text,x,want", [
        ("sub(x0,x1)", [1, 4], -3), ("min(x0,x1)", [1, 4], 1), ("max(x0,x1)", [1, 4], 4),
        ("abs(x0)", [-2, 0], 2), ("neg(x1)", [0, 7], -7),
    ])
    def test_each_operator(self, text, x, want):
        assert expr.evaluate(expr.parse(text), x + [0] * 8) == want

    def test_clamp_prevents_overflow(self):
        f = Leaf(0)
        for _ in range(8):
            f = Op("mul", (f, f))
        v = expr.evaluate(f, [1e6] + [0] * 9)
        assert v == expr.CLAMP

    def test_bad_index(self):
        with pytest.raises(MalformedFunctionError):
            expr.evaluate(Leaf(12), [0.0] * 10)

    def test_batch_matches_scalar(self):
        f = expr.parse("safediv(max(x0,x3),sub(x1,abs(x2)))")
        X = rng().standard_normal((50, 10))
        batch = expr.evaluate_batch(f, X)
        assert batch.tolist() == [expr.evaluate(f, row) for row in X]

    def test_totality_fuzz(self):
        # 100 trees x 1000 rows = 1e5 (tree, input) pairs, inputs at extreme scales
        r = rng(1)
        cfg = GrowConfig(1, 6)
        X = r.standard_normal((1000, 10)) * 10.0 ** r.integers(-12, 13, size=(1000, 10))
        X[::7] = 0.0
        for _ in range(100):
            f = expr.random_tree(cfg, r)
            assert np.isfinite(expr.evaluate_batch(f, X)).all(), expr.to_string(f)


class TestGrowth:
    def test_depth_one_is_leaf(self):
        f = expr.random_tree(GrowConfig(1, 1), rng())
        assert isinstance(f, Leaf)

    def test_deterministic(self):
        cfg = GrowConfig()
        assert expr.random_tree(cfg, rng(5)) == expr.random_tree(cfg, rng(5))

    def test_bounds_over_draws(self):
        cfg = GrowConfig(2, 6, 63)
        r = rng(2)
        depths = set()
        for _ in range(1000):
            f = expr.random_tree(cfg, r)
            assert expr.depth(f) <= 6 and expr.size(f) <= 63
            assert max(expr.features_used(f)) < 10
            depths.add(expr.depth(f))
        assert len(depths) >= 4  # ramped

    def test_infeasible_config(self):
        with pytest.raises(ConfigError):
            GrowConfig(4, 3)
        with pytest.raises(ConfigError):
            GrowConfig(0, 3)
        with pytest.raises(ConfigError):
            GrowConfig(operators=())

    def test_constants_opt_in(self):
        cfg = GrowConfig(3, 5, constants=True)
        r = rng(3)
        found = [n for _ in range(50) for _, n in expr.walk(expr.random_tree(cfg, r))
                 if isinstance(n, Const)]
        assert found and all(-1 <= c.value <= 1 for c in found)
        plain = [n for _ in range(50) for _, n in expr.walk(expr.random_tree(GrowConfig(), r))
                 if isinstance(n, Const)]
        assert not plain


class TestVariation:
    def test_crossover_of_leaves(self):
        a, b = Leaf(1), Leaf(2)
        out = expr.crossover(a, b, rng(), GrowConfig(1, 3))
        assert out == (b, a)

    def test_point_mutation_keeps_depth_one(self):
        cfg = GrowConfig(1, 1)
        for s in range(20):
            assert expr.depth(expr.mutate(Leaf(0), rng(s), cfg, "point")) == 1

    def test_mutation_of_max_size_tree(self):
        cfg = GrowConfig(2, 6, 31)
        r = rng(4)
        f = expr.random_tree(cfg, r)
        while expr.size(f) < 25:
            f = expr.random_tree(cfg, r)
        for _ in range(1000):
            g = expr.mutate(f, r, cfg)
            assert expr.size(g) <= 31 and expr.depth(g) <= 6

    def test_crossover_closure(self):
        cfg = GrowConfig(2, 5, 20)
        r = rng(6)
        pop = [expr.random_tree(cfg, r) for _ in range(30)]
        for _ in range(500):
            i, j = r.integers(30, size=2)
            for child in expr.crossover(pop[i], pop[j], r, cfg):
                assert expr.is_valid(child, cfg)

    def test_inputs_untouched(self):
        cfg = GrowConfig()
        f = expr.random_tree(cfg, rng(7))
        text = expr.to_string(f)
        expr.mutate(f, rng(8), cfg)
        expr.crossover(f, f, rng(9), cfg)
        assert expr.to_string(f) == text


class TestBigrams:
    def test_leaf_empty(self):
        assert expr.bigram_histogram(Leaf(3)) == {}

    def test_leaf_children_empty(self):
        assert expr.bigram_histogram(expr.parse("add(x0,x1)")) == {}

    def test_single_edge(self):
        h = expr.bigram_histogram(expr.parse("add(mul(x0,x1),x2)"))
        assert h == {("add", "mul"): 1}

    @given(trees())
    def test_conservation(self, f):
        h = expr.bigram_histogram(f)
        edges = sum(1 for _, n in expr.walk(f) if isinstance(n, Op)
                    for c in n.children if isinstance(c, Op))
        assert sum(h.values()) == edges
        assert all(v >= 0 for v in h.values())

    def test_json_round_trip(self):
        h = expr.bigram_histogram(expr.parse("add(mul(neg(x0),x1),mul(x2,x3))"))
        assert expr.histogram_to_json(h) == {"add>mul": 2, "mul>neg": 1}
        assert expr.histogram_from_json(expr.histogram_to_json(h)) == h


class TestText:
    def test_leaf(self):
        assert expr.to_string(Leaf(0)) == "x0"

    def test_parse_safediv(self):
        assert expr.parse("safediv(x1,x9)") == Op("safediv", (Leaf(1), Leaf(9)))

    def test_unbalanced_offset(self):
        with pytest.raises(ParseError) as e:
            expr.parse("add(x0")
        assert e.value.offset == 7
        assert "offset 7" in str(e.value)

    @pytest.mark.parametrize("text,offset", [
        ("foo(x0)", 1), ("add(x0,x10)", 8), ("add(x0,x1))", 11), ("", 1), ("add x0", 5),
    ])
    def test_error_offsets(self, text, offset):
        with pytest.raises(ParseError) as e:
            expr.parse(text)
        assert e.value.offset == offset

    def test_whitespace_and_case(self):
        assert expr.parse(" ADD( x0 , x1 ) ") == expr.parse("add(x0,x1)")

    @given(trees())
    @settings(max_examples=200)
    def test_round_trip(self, f):
        assert expr.parse(expr.to_string(f)) == f

    def test_round_trip_constants(self):
        f = Op("add", (Const(-0.1234567890123), Leaf(2)))
        assert expr.parse(expr.to_string(f)) == f
        assert math.isclose(expr.evaluate(f, [0, 0, 1] + [0] * 7), 0.8765432109877)
