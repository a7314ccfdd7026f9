"""``duelbench`` command line: discover, synthesize, evaluate, similarity, report.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
Global flags may also come from the environment: DUELBENCH_CONFIG, DUELBENCH_SEED,
DUELBENCH_JOBS, DUELBENCH_OUT_DIR (command-line flags win).
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from itertools import permutations
from pathlib import Path

from . import __version__, classifiers, dataset, evaluation, evolution, expr, report, suite
from .errors import ConfigError, DegenerateDataError, DuelBenchError, UndefinedMetricError
from .rng import derive_seed

log = logging.getLogger("duelbench")

ENV_PREFIX = "DUELBENCH_"

DEFAULT_CONFIG = {
    "seed": 0,
    "classifiers": [s.name for s in classifiers.registry()],
    "evolution": {
        "population_size": 20,
        "generations": 15,
        "mutation_rate": 0.3,
        "crossover_rate": 0.7,
        "fitness_tuning_budget": 8,
        "fitness_cv_folds": 3,
        "archive_capacity": 50,
        "train_fraction": 0.8,
        "spread_scope": "bystanders",
    },
    "dataset": {"n_samples": 1000, "n_features": 10, "seed": 0},
    "grow": {"min_depth": 2, "max_depth": 6, "max_size": 63,
             "operators": list(expr.OPERATOR_SET), "constants": False},
    "suite": {"enabled": True, "revalidate": True, "per_duel": 1, "max_size": 40, "tau": 0.5,
              "budget": 200, "folds": 10, "n_samples": 1000},
    "evaluation": {"budget": 200, "folds": 10, "train_fraction": 0.8},
}


# --- configuration -------------------------------------------------------------

def _read_config_file(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(path: str | None, seed: int | None) -> dict:
    """Defaults, then the config file (schema-checked), then ``--seed``."""
    user = {}
    if path:
        user = _read_config_file(Path(path))
        try:
            report.validate(user, "run_config")
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    cfg = _merge(DEFAULT_CONFIG, user)
    if seed is not None:
        cfg["seed"] = seed
    if not 0 <= cfg["seed"] < 2**64:
        raise ConfigError(f"field seed: {cfg['seed']} is not an unsigned 64-bit integer")
    try:
        classifiers.registry(cfg["classifiers"])
    except ConfigError as exc:
        raise ConfigError(f"field classifiers: {exc}") from None
    for i, pair in enumerate(cfg.get("duels", [])):
        unknown = [n for n in pair if n not in cfg["classifiers"]]
        if unknown or pair[0] == pair[1]:
            raise ConfigError(f"field duels.{i}: {pair} must name two distinct configured "
                              f"classifiers")
    if "replicate_seed" not in cfg["suite"]:
        cfg["suite"]["replicate_seed"] = derive_seed(cfg["seed"], "replicate")
    g = cfg["grow"]
    if g["min_depth"] > g["max_depth"]:
        raise ConfigError("field grow.min_depth: exceeds grow.max_depth")
    return cfg


def _grow_config(cfg) -> expr.GrowConfig:
    g = dict(cfg["grow"])
    g["operators"] = tuple(g["operators"])
    return expr.GrowConfig(n_features=cfg["dataset"]["n_features"], **g)


def _duel_configs(cfg) -> list[evolution.DuelConfig]:
    names = cfg["classifiers"]
    pairs = [tuple(p) for p in cfg.get("duels", [])] or list(permutations(names, 2))
    seeds = cfg.get("seeds") or [cfg["seed"]]
    d = cfg["dataset"]
    ds_cfg = dataset.DatasetConfig(d["n_samples"], d["n_features"], d["seed"])
    grow = _grow_config(cfg)
    out = []
    for s in seeds:
        for target, rival in pairs:
            rest = tuple(n for n in names if n not in (target, rival))
            out.append(evolution.DuelConfig(
                target, rival, rest, dataset_config=ds_cfg, grow=grow,
                seed=evolution.duel_seed(s, target, rival), **cfg["evolution"]))
    return out


# --- commands ------------------------------------------------------------------

def _manifest(args, cfg, command, inputs=()) -> dict:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    m = report.build_manifest(__version__, command, cfg, cfg["seed"], expr.OPERATOR_SET,
                              cfg["classifiers"], inputs)
    report.write_json(out / f"{command}.manifest.json", m)
    return m


def cmd_discover(args, cfg) -> int:
    out = Path(args.out_dir)
    duels = _duel_configs(cfg)
    seeds = cfg.get("seeds") or [cfg["seed"]]
    man = _manifest(args, cfg, "discover")
    h = man["manifest_hash"]
    candidates = []
    for i, duel in enumerate(duels):
        sweep = seeds[i // (len(duels) // len(seeds))]
        stem = f"{duel.target}__{duel.rival}__s{sweep}"
        log.info("duel %s (%d/%d)", stem, i + 1, len(duels))
        archive = evolution.run_duel(duel, args.jobs, _progress)
        lines = []
        for e in archive.entries:
            rec = e.to_json()
            rec.update(target=duel.target, rival=duel.rival, manifest_hash=h)
            lines.append(json.dumps(rec, sort_keys=True))
        path = out / "archives" / f"{stem}.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(ln + "\n" for ln in lines))
        report.write_json(out / "history" / f"{stem}.json", {
            "target": duel.target, "rival": duel.rival, "seed": duel.seed,
            "generations": archive.history, "manifest_hash": h})
        for e in archive.entries[:cfg["suite"]["per_duel"]]:
            candidates.append((duel, e))
    if cfg["suite"]["enabled"]:
        _write_suite(out, cfg, candidates, h)
    return 0


def _progress(duel, archive):
    rec = archive.history[-1]
    log.info("  gen %d best_gap=%.4f archive=%d evaluations=%d", rec["generation"],
             rec["best_gap"], rec["archive_size"], rec["evaluations"])


def _write_suite(out: Path, cfg, candidates, manifest_hash: str) -> None:
    sc = cfg["suite"]
    entries = []
    for duel, e in candidates:
        if sc["revalidate"]:
            try:
                entries.append(suite.revalidate(
                    e.function, sc["replicate_seed"], cfg["classifiers"], sc["n_samples"],
                    cfg["dataset"]["n_features"], sc["budget"], sc["folds"],
                    derive_seed(cfg["seed"], "revalidate"),
                    cfg["evolution"]["train_fraction"], duel.target, duel.rival))
            except (DegenerateDataError, UndefinedMetricError) as exc:
                log.warning("skipping %s: %s", e.text, exc)
        else:
            entries.append(suite.BenchmarkEntry(
                e.text, duel.dataset_config.seed, dict(e.fitness.per_method_auroc),
                expr.bigram_histogram(e.function), e.fitness.gap, e.fitness.spread))
    chosen = suite.select_suite(entries, sc["max_size"], sc["tau"]) if entries else []
    records = []
    for k, entry in enumerate(chosen):
        rec = entry.to_json()
        rec["id"] = f"b{k:03d}"
        records.append(rec)
    protocol = ({"kind": "full", "budget": sc["budget"], "folds": sc["folds"],
                 "n_samples": sc["n_samples"]} if sc["revalidate"] else {"kind": "inner"})
    report.write_json(out / "suite.json", {"entries": records, "protocol": protocol,
                                           "candidates": len(entries),
                                           "manifest_hash": manifest_hash})
    if records:
        _write_similarity(out / "similarity.csv", chosen, [r["id"] for r in records],
                          manifest_hash)


def _write_similarity(path, entries, ids, manifest_hash):
    m = suite.similarity_matrix(entries)
    rows = [[ids[i]] + m[i].tolist() for i in range(len(ids))]
    report.write_csv(path, ["id"] + ids, rows, manifest_hash)


def _load_suite(path: Path) -> tuple[list, list]:
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read suite manifest {path}: {exc}") from None
    raw = data.get("entries", data) if isinstance(data, dict) else data
    if not isinstance(raw, list):
        raise ConfigError(f"{path}: expected a list of entries")
    entries, ids = [], []
    for i, rec in enumerate(raw):
        try:
            entries.append(suite.BenchmarkEntry.from_json(rec))
        except ConfigError as exc:
            raise ConfigError(f"{path}: entry {i}: {exc}") from None
        ids.append(rec.get("id", f"b{i:03d}"))
    return entries, ids


def cmd_synthesize(args, cfg) -> int:
    out = Path(args.out_dir) / "datasets"
    n_features = args.n_features or cfg["dataset"]["n_features"]
    dataset.DatasetConfig(args.n_samples, n_features, 0)
    items = []
    inputs = []
    if args.suite:
        entries, ids = _load_suite(Path(args.suite))
        items += [(i, expr.parse(e.function_text, n_features)) for i, e in zip(ids, entries)]
        inputs.append(args.suite)
    for k, text in enumerate(args.function or []):
        items.append((f"f{k:03d}", expr.parse(text, n_features)))
    if not items:
        raise ConfigError("synthesize needs --function or --suite")
    cfg = dict(cfg, synthesize={"functions": [expr.to_string(f) for _, f in items],
                                "n_samples": args.n_samples, "n_features": n_features,
                                "replicates": args.replicates})
    h = _manifest(args, cfg, "synthesize", inputs)["manifest_hash"]
    out.mkdir(parents=True, exist_ok=True)
    for fid, f in items:
        base = dataset.DatasetConfig(args.n_samples, n_features, cfg["seed"])
        for ds in dataset.replicate(f, base, args.replicates):
            dataset.write_csv(ds, out / f"{fid}_s{ds.config.seed}.csv", id=fid,
                              manifest_hash=h)
    log.info("wrote %d datasets to %s", len(items) * args.replicates, out)
    return 0


def _evaluate_one(job):
    path, names, budget, folds, seed, tf = job
    try:
        ds = dataset.read_csv(path)
        view = evaluation.as_view(ds)
        results = evaluation.evaluate_methods(view, classifiers.registry(names), budget, folds,
                                              seed, tf)
        _, test = evaluation.stratified_split(view, tf, derive_seed(seed, "split"))
        curves = {}
        for name, r in results.items():
            rt, fpr, tpr = evaluation.roc_curve(r.test_scores, test.target)
            pt, rec, prec, _ = evaluation.prc(r.test_scores, test.target)
            curves[name] = (rt.tolist(), fpr.tolist(), tpr.tolist(),
                            pt.tolist(), rec.tolist(), prec.tolist())
        return path, {n: r.to_json() for n, r in results.items()}, curves, None
    except (DuelBenchError, OSError, ValueError) as exc:
        return path, None, None, f"{type(exc).__name__}: {exc}"


def cmd_evaluate(args, cfg) -> int:
    out = Path(args.out_dir)
    ev = cfg["evaluation"]
    budget = args.budget or ev["budget"]
    folds = args.folds or ev["folds"]
    names = args.methods.split(",") if args.methods else cfg["classifiers"]
    try:
        classifiers.registry(names)
    except ConfigError as exc:
        raise ConfigError(f"--methods: {exc}") from None
    if len(set(args.datasets)) != len(args.datasets):
        raise ConfigError("dataset paths must be distinct")
    existing = [p for p in args.datasets if Path(p).is_file()]
    cfg = dict(cfg, classifiers=names,
               evaluation=dict(ev, budget=budget, folds=folds),
               datasets=[str(p) for p in args.datasets])
    h = _manifest(args, cfg, "evaluate", existing)["manifest_hash"]
    jobs = [(p, names, budget, folds, cfg["seed"], ev["train_fraction"]) for p in args.datasets]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            done = list(pool.map(_evaluate_one, jobs))
    else:
        done = [_evaluate_one(j) for j in jobs]

    ok = [(p, res, cur) for p, res, cur, err in done if err is None]
    errors = {str(p): err for p, _, _, err in done if err is not None}
    for p, err in errors.items():
        log.error("%s: %s", p, err)
    labels = _dataset_labels([p for p, _, _ in ok])
    report.write_json(out / "results.json", {
        "datasets": [{"dataset": lab, "path": str(p), "results": res}
                     for lab, (p, res, _) in zip(labels, ok)],
        "methods": names, "budget": budget, "folds": folds, "errors": errors,
        "manifest_hash": h})
    if not ok:
        return 1
    for key, fname in (("test_auroc", "heatmap.csv"), ("best_cv_auroc", "heatmap_cv.csv")):
        rows = [[lab] + [res[n][key] for n in names] for lab, (_, res, _) in zip(labels, ok)]
        report.write_csv(out / fname, ["dataset"] + names, rows, h)
    box = []
    for n in names:
        s = report.boxplot_summary([res[n]["test_auroc"] for _, res, _ in ok])
        box.append([n, s["n"], s["min"], s["q1"], s["median"], s["q3"], s["max"]])
    report.write_csv(out / "boxplot.csv", report.CSV_HEADERS["boxplot"], box, h)

    _, _, curves = ok[0]
    for n in names:
        rt, fpr, tpr, pt, rec, prec = curves[n]
        report.write_csv(out / "curves" / f"roc_{n}.csv", report.CSV_HEADERS["roc"],
                         zip(rt, fpr, tpr), h)
        report.write_csv(out / "curves" / f"prc_{n}.csv", report.CSV_HEADERS["prc"],
                         zip(pt, rec, prec), h)
    if args.svg:
        report.svg_curve(out / "curves" / "roc.svg",
                         {n: (curves[n][1], curves[n][2]) for n in names}, "FPR", "TPR")
        report.svg_curve(out / "curves" / "prc.svg",
                         {n: (curves[n][4], curves[n][5]) for n in names}, "recall",
                         "precision")
    return 0


def _dataset_labels(paths) -> list[str]:
    stems = [Path(p).stem for p in paths]
    if len(set(stems)) == len(stems):
        return stems
    return [str(p) for p in paths]


def cmd_similarity(args, cfg) -> int:
    entries, ids = _load_suite(Path(args.suite))
    if not entries:
        raise ConfigError(f"{args.suite}: no entries")
    h = _manifest(args, cfg, "similarity", [args.suite])["manifest_hash"]
    _write_similarity(Path(args.out_dir) / "similarity.csv", entries, ids, h)
    return 0


def cmd_report(args, cfg) -> int:
    try:
        data = json.loads(Path(args.results).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {args.results}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.results}: line {exc.lineno}: {exc.msg}") from None
    aurocs = {}
    for d in data.get("datasets", []):
        aurocs[d["dataset"]] = {m: r["test_auroc"] for m, r in d["results"].items()}
    rows = report.deviation_table(aurocs)
    h = _manifest(args, cfg, "report", [args.results])["manifest_hash"]
    report.write_csv(Path(args.out_dir) / "deviation.csv", report.CSV_HEADERS["deviation"],
                     rows, h)
    return 0


# --- parser --------------------------------------------------------------------

def _env_int(name):
    v = os.environ.get(ENV_PREFIX + name)
    if v is None:
        return None
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{ENV_PREFIX}{name}={v!r} is not an integer") from None


def _add_globals(p, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(os.environ.get(ENV_PREFIX + "CONFIG")),
                   help="run config (JSON or TOML)")
    p.add_argument("--seed", type=int, default=d(_env_int("SEED")), help="base seed")
    p.add_argument("--jobs", type=int, default=d(_env_int("JOBS") or 1),
                   help="worker processes; results do not depend on it")
    p.add_argument("--out-dir", default=d(os.environ.get(ENV_PREFIX + "OUT_DIR", "out")),
                   help="output directory")
    p.add_argument("-q", "--quiet", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="duelbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discover", help="evolve functions for classifier duels")
    _add_globals(p, suppress=True)

    p = sub.add_parser("synthesize", help="write dataset CSVs for functions")
    _add_globals(p, suppress=True)
    p.add_argument("--function", action="append", help="function in prefix form (repeatable)")
    p.add_argument("--suite", help="suite manifest JSON to take functions from")
    p.add_argument("-n", "--n-samples", type=int, default=1000)
    p.add_argument("--n-features", type=int, default=None)
    p.add_argument("--replicates", type=int, default=1,
                   help="datasets per function, seeds base .. base+R-1")

    p = sub.add_parser("evaluate", help="tune and score classifiers on dataset CSVs")
    _add_globals(p, suppress=True)
    p.add_argument("datasets", nargs="+")
    p.add_argument("--methods", help="comma-separated classifier names")
    p.add_argument("--budget", type=int, help="random-search trials per method")
    p.add_argument("--folds", type=int, help="cross-validation folds")
    p.add_argument("--svg", action="store_true", help="also render ROC/PRC as SVG")

    p = sub.add_parser("similarity", help="Ruzicka similarity matrix for a suite")
    _add_globals(p, suppress=True)
    p.add_argument("suite")

    p = sub.add_parser("report", help="deviation-from-mean table from results.json")
    _add_globals(p, suppress=True)
    p.add_argument("results")
    return parser


COMMANDS = {"discover": cmd_discover, "synthesize": cmd_synthesize, "evaluate": cmd_evaluate,
            "similarity": cmd_similarity, "report": cmd_report}


def main(argv=None) -> int:
    try:
        parser = build_parser()
    except ConfigError as exc:
        print(f"duelbench: config error: {exc}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        if args.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
        cfg = resolve_config(args.config, args.seed)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"duelbench: config error: {exc}", file=sys.stderr)
        return 2
    except (DuelBenchError, OSError) as exc:
        print(f"duelbench: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
