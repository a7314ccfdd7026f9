import json

import numpy as np
import pytest

from duelbench import cli, report
from duelbench.report import ReportError

MINI = {"classifiers": ["decision_tree", "logistic_regression", "knn"],
        "duels": [["decision_tree", "logistic_regression"]],
        "evolution": {"population_size": 8, "generations": 3, "fitness_tuning_budget": 2},
        "dataset": {"n_samples": 200},
        "suite": {"revalidate": False}}


@pytest.fixture
def mini_config(tmp_path):
    p = tmp_path / "mini.json"
    p.write_text(json.dumps(MINI))
    return p


@pytest.fixture(autouse=True)
def pinned_time(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


def run(*argv):
    return cli.main([*map(str, argv)])


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


class TestDiscover:
    def test_smoke_and_determinism(self, tmp_path, mini_config):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("--config", mini_config, "--out-dir", a, "-q", "discover") == 0
        assert run("--config", mini_config, "--out-dir", b, "-q", "--jobs", "2", "discover") == 0
        arch = a / "archives" / "decision_tree__logistic_regression__s0.jsonl"
        lines = arch.read_text().splitlines()
        assert len(lines) >= 1
        man = json.loads((a / "discover.manifest.json").read_text())
        report.validate(man, "manifest")
        for ln in lines:
            rec = json.loads(ln)
            report.validate(rec, "archive_record")
            assert rec["manifest_hash"] == man["manifest_hash"]
        report.validate(json.loads((a / "suite.json").read_text()), "suite")
        report.validate(json.loads(next((a / "history").glob("*.json")).read_text()), "history")
        report.validate_csv(a / "similarity.csv", "similarity")
        assert tree_bytes(a) == tree_bytes(b)

    def test_global_flags_after_subcommand(self, tmp_path, mini_config):
        out = tmp_path / "o"
        assert run("discover", "--config", mini_config, "--out-dir", out, "-q", "--seed", "4") == 0
        assert (out / "archives" / "decision_tree__logistic_regression__s4.jsonl").exists()

    def test_env_overrides(self, tmp_path, mini_config, monkeypatch):
        monkeypatch.setenv("DUELBENCH_CONFIG", str(mini_config))
        monkeypatch.setenv("DUELBENCH_OUT_DIR", str(tmp_path / "env"))
        monkeypatch.setenv("DUELBENCH_SEED", "2")
        assert run("-q", "discover") == 0
        man = json.loads((tmp_path / "env" / "discover.manifest.json").read_text())
        assert man["seed"] == 2

    def test_bad_classifier(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"classifiers": ["knn", "svm_rbf"]}))
        assert run("--config", p, "--out-dir", tmp_path, "discover") == 2
        assert "classifiers" in capsys.readouterr().err

    def test_schema_and_syntax_errors(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"evolution": {"mutation_rate": 2}}))
        assert run("--config", p, "discover") == 2
        assert "evolution.mutation_rate" in capsys.readouterr().err
        p.write_text('{"seed": 1,\n  "oops": }')
        assert run("--config", p, "discover") == 2
        assert "line 2" in capsys.readouterr().err

    def test_toml_config(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text('classifiers = ["knn", "decision_tree"]\n[evolution]\npopulation_size = 4\n'
                     'generations = 0\nfitness_tuning_budget = 1\n[dataset]\nn_samples = 60\n'
                     '[suite]\nenabled = false\n')
        assert run("--config", p, "--out-dir", tmp_path / "t", "-q", "discover") == 0
        assert len(list((tmp_path / "t" / "archives").glob("*.jsonl"))) == 2


class TestSynthesize:
    def test_default_shape(self, tmp_path):
        assert run("--out-dir", tmp_path, "-q", "synthesize", "--function", "mul(x0,x1)") == 0
        p = tmp_path / "datasets" / "f000_s0.csv"
        lines = p.read_text().splitlines()
        assert len(lines) == 1001
        assert sum(int(ln.rsplit(",", 1)[1]) for ln in lines[1:]) == 500
        meta = json.loads((tmp_path / "datasets" / "f000_s0.csv.json").read_text())
        report.validate(meta, "dataset_sidecar")

    def test_replicates(self, tmp_path):
        assert run("--out-dir", tmp_path, "-q", "--seed", "10", "synthesize", "--function",
                   "x0", "--replicates", "5", "-n", "20") == 0
        names = sorted(p.name for p in (tmp_path / "datasets").glob("*.csv"))
        assert names == [f"f000_s{s}.csv" for s in range(10, 15)]

    def test_errors(self, tmp_path, capsys):
        assert run("--out-dir", tmp_path, "synthesize", "--function", "add(x0") == 2
        assert "offset 7" in capsys.readouterr().err
        assert run("--out-dir", tmp_path, "synthesize", "--function", "x0", "-n", "9") == 2
        assert run("--out-dir", tmp_path, "synthesize") == 2


class TestEvaluateAndReport:
    @pytest.fixture
    def datasets(self, tmp_path):
        run("--out-dir", tmp_path / "s", "-q", "synthesize", "--function", "mul(x0,x1)",
            "--replicates", "3", "-n", "120")
        return sorted((tmp_path / "s" / "datasets").glob("*.csv"))

    def test_outputs(self, tmp_path, datasets):
        out = tmp_path / "e"
        rc = run("--out-dir", out, "-q", "evaluate", *datasets, "--budget", "3", "--folds", "3",
                 "--methods", "decision_tree,knn", "--svg")
        assert rc == 0
        res = json.loads((out / "results.json").read_text())
        report.validate(res, "results")
        for d in res["datasets"]:
            for r in d["results"].values():
                assert r["n_trials"] == 3 and len(r["trial_log"]) == 3 and r["cv_folds"] == 3
        header, rows = report.read_report_csv(out / "heatmap.csv")
        assert header == ["dataset", "decision_tree", "knn"] and len(rows) == 3
        report.validate_csv(out / "heatmap.csv", "heatmap")
        report.validate_csv(out / "boxplot.csv", "boxplot")
        for _, rows in [report.read_report_csv(out / "boxplot.csv")]:
            for r in rows:
                q = list(map(float, r[2:]))
                assert q == sorted(q)
        for m in ("decision_tree", "knn"):
            report.validate_csv(out / "curves" / f"roc_{m}.csv", "roc")
            report.validate_csv(out / "curves" / f"prc_{m}.csv", "prc")
        assert (out / "curves" / "roc.svg").read_text().startswith("<svg")

        assert run("--out-dir", tmp_path / "r", "-q", "report", out / "results.json") == 0
        report.validate_csv(tmp_path / "r" / "deviation.csv", "deviation")
        _, rows = report.read_report_csv(tmp_path / "r" / "deviation.csv")
        by = {}
        for d, m, a, mean, dev in rows:
            by.setdefault(d, []).append(float(dev))
        assert all(abs(sum(v)) < 1e-12 for v in by.values())

    def test_jobs_identical(self, tmp_path, datasets):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ["evaluate", *datasets, "--budget", "2", "--folds", "2", "--methods", "knn"]
        assert run("--out-dir", a, "-q", *args) == 0
        assert run("--out-dir", b, "-q", "--jobs", "3", *args) == 0
        assert tree_bytes(a) == tree_bytes(b)

    def test_all_fail(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("feature_0,target\nx,1\n")
        assert run("--out-dir", tmp_path / "o", "-q", "evaluate", bad, tmp_path / "none.csv") == 1

    def test_partial_failure(self, tmp_path, datasets):
        rc = run("--out-dir", tmp_path / "o", "-q", "evaluate", datasets[0],
                 tmp_path / "none.csv", "--budget", "1", "--folds", "2", "--methods", "knn")
        assert rc == 0
        res = json.loads((tmp_path / "o" / "results.json").read_text())
        assert len(res["datasets"]) == 1 and len(res["errors"]) == 1


class TestSimilarity:
    def test_matrix(self, tmp_path):
        s = tmp_path / "suite.json"
        s.write_text(json.dumps({"entries": [
            {"function": "add(mul(x0,x1),x2)", "seed": 0, "per_method_auroc": {}},
            {"function": "add(mul(x3,x1),x2)", "seed": 0, "per_method_auroc": {}},
            {"function": "neg(abs(x0))", "seed": 0, "per_method_auroc": {}}]}))
        assert run("--out-dir", tmp_path / "o", "-q", "similarity", s) == 0
        header, rows = report.read_report_csv(tmp_path / "o" / "similarity.csv")
        assert header == ["id", "b000", "b001", "b002"]
        m = np.array([[float(v) for v in r[1:]] for r in rows])
        assert m[0, 1] == 1.0 and m[0, 2] == 0.0 and np.array_equal(m, m.T)

    def test_single_and_bad(self, tmp_path):
        s = tmp_path / "suite.json"
        s.write_text(json.dumps([{"function": "x0", "seed": 1, "per_method_auroc": {}}]))
        assert run("--out-dir", tmp_path / "o", "-q", "similarity", s) == 0
        _, rows = report.read_report_csv(tmp_path / "o" / "similarity.csv")
        assert rows == [["b000", "1.0"]]
        s.write_text(json.dumps([{"function": "add(x0", "seed": 1}]))
        assert run("--out-dir", tmp_path / "o", "-q", "similarity", s) == 2


class TestReportHelpers:
    def test_deviation_examples(self):
        rows = report.deviation_table({"d": {"a": 0.9, "b": 0.7}})
        assert [round(r[4], 12) for r in rows] == [0.1, -0.1]
        rows = report.deviation_table({"d": {"a": 0.6, "b": 0.6, "c": 0.6}})
        assert all(r[4] == 0.0 for r in rows)

    def test_deviation_missing(self):
        with pytest.raises(ReportError, match="d2: b"):
            report.deviation_table({"d1": {"a": 0.5, "b": 0.6}, "d2": {"a": 0.5}})
        with pytest.raises(ReportError):
            report.deviation_table({"d1": {"a": 0.5}})

    def test_boxplot(self):
        s = report.boxplot_summary([1, 2, 3, 4])
        assert (s["q1"], s["median"], s["q3"]) == (1.75, 2.5, 3.25)

    def test_manifest_hash_ignores_time(self, monkeypatch):
        a = report.build_manifest("1", "discover", {"x": 1}, 0, ["add"], ["knn"])
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1800000000")
        b = report.build_manifest("1", "discover", {"x": 1}, 0, ["add"], ["knn"])
        c = report.build_manifest("1", "discover", {"x": 2}, 0, ["add"], ["knn"])
        assert a["manifest_hash"] == b["manifest_hash"] != c["manifest_hash"]
        assert a["created"] != b["created"]
