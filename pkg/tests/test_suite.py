from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from duelbench import suite
from duelbench.errors import ConfigError
from duelbench.suite import BenchmarkEntry, ruzicka

OPS = ["add", "sub", "mul", "safediv", "min", "max", "neg", "abs"]
hists = st.dictionaries(st.tuples(st.sampled_from(OPS), st.sampled_from(OPS)),
                        st.integers(0, 6), max_size=8).map(Counter)


def entry(text, aucs=None, gap=0.0, spread=0.0):
    return BenchmarkEntry(text, 0, aucs or {"a": 0.5, "b": 0.6}, None, gap, spread)


class TestRuzicka:
    def test_worked_example(self):
        x = Counter({("add", "mul"): 2, ("add", "safediv"): 1})
        y = Counter({("add", "mul"): 1, ("mul", "neg"): 1, ("add", "safediv"): 1})
        assert ruzicka(x, y) == 0.5

    def test_edge_cases(self):
        assert ruzicka(Counter(), Counter()) == 1.0
        assert ruzicka(Counter({("add", "mul"): 1}), Counter({("mul", "add"): 3})) == 0.0
        assert ruzicka(Counter({("add", "mul"): 1}), Counter()) == 0.0

    @given(hists, hists)
    def test_symmetric_bounded(self, x, y):
        assert ruzicka(x, y) == ruzicka(y, x)
        assert 0.0 <= ruzicka(x, y) <= 1.0

    @given(hists, hists)
    def test_identity_iff_equal(self, x, y):
        x = +x
        y = +y
        assert (ruzicka(x, y) == 1.0) == (x == y)

    @given(hists.filter(lambda h: sum(h.values()) > 0), st.integers(1, 9))
    def test_scale_sensitivity(self, x, c):
        cx = Counter({k: c * v for k, v in x.items()})
        assert abs(ruzicka(cx, x) - 1 / c) < 1e-12


class TestMatrix:
    def test_single(self):
        assert suite.similarity_matrix([entry("add(mul(x0,x1),x2)")]).tolist() == [[1.0]]

    def test_duplicates_and_symmetry(self):
        es = [entry("add(mul(x0,x1),x2)"), entry("neg(abs(x1))"), entry("add(mul(x3,x4),x0)")]
        m = suite.similarity_matrix(es)
        assert np.array_equal(m, m.T)
        assert m[0, 2] == 1.0 and np.all(np.diag(m) == 1.0)
        assert ((m >= 0) & (m <= 1)).all()

    def test_empty(self):
        with pytest.raises(ConfigError):
            suite.similarity_matrix([])


class TestSelect:
    def test_identical_candidates(self):
        es = [entry("add(mul(x0,x1),x2)", gap=g) for g in (0.1, 0.3, 0.2)]
        out = suite.select_suite(es, 10, 0.5)
        assert len(out) == 1 and out[0].gap == 0.3

    def test_disjoint_with_tau_one(self):
        texts = ["add(mul(x0,x1),x2)", "sub(neg(x0),x1)", "min(abs(x0),x1)", "max(safediv(x0,x1),x2)"]
        es = [entry(t, spread=i / 10) for i, t in enumerate(texts)]
        out = suite.select_suite(es, 3, 1.0)
        assert [e.function_text for e in out] == texts[1:]

    def test_pairwise_below_tau_and_order(self):
        r = np.random.default_rng(0)
        ops = ["add", "sub", "mul", "min", "max"]
        es = []
        for i in range(40):
            a, b = r.choice(ops, 2)
            es.append(entry(f"{a}({b}(x0,x1),{b}(x2,x{i % 10}))", spread=float(r.random()),
                            aucs={"a": float(r.random()), "b": float(r.random())}))
        out = suite.select_suite(es, 40, 0.6)
        idx = [es.index(e) for e in out]
        assert idx == sorted(idx)
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                assert ruzicka(out[i].histogram, out[j].histogram) < 0.6
        assert suite.select_suite(out, 40, 0.6) == out

    def test_ranking_diversity_first(self):
        hi = {"a": 0.9, "b": 0.1}
        lo = {"a": 0.1, "b": 0.9}
        es = [entry("add(mul(x0,x1),x2)", hi, spread=0.9),
              entry("sub(neg(x0),x1)", hi, spread=0.8),
              entry("min(abs(x0),x1)", lo, spread=0.0)]
        out = suite.select_suite(es, 2, 1.0)
        assert {e.function_text for e in out} == {"add(mul(x0,x1),x2)", "min(abs(x0),x1)"}

    def test_ranking_ties_alphabetical(self):
        assert entry("x0", {"b": 0.7, "a": 0.7, "c": 0.9}).method_ranking == ("c", "a", "b")

    def test_args(self):
        with pytest.raises(ConfigError):
            suite.select_suite([], 1, 0.0)
        with pytest.raises(ConfigError):
            suite.select_suite([], 0, 0.5)

    def test_json_round_trip(self):
        e = entry("add(mul(x0,x1),x2)", gap=0.2, spread=0.1)
        back = BenchmarkEntry.from_json(e.to_json())
        assert back == e and back.histogram == e.histogram


def test_revalidate_small():
    e = suite.revalidate("x0", 5, ["decision_tree", "logistic_regression", "knn"], 200, 10,
                         budget=2, folds=3, target="decision_tree", rival="logistic_regression")
    assert set(e.per_method_auroc) == {"decision_tree", "logistic_regression", "knn"}
    assert e.gap == e.per_method_auroc["decision_tree"] - e.per_method_auroc["logistic_regression"]
    assert e.per_method_auroc["logistic_regression"] > 0.9
