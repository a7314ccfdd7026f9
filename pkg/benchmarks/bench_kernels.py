"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--n 640] [--repeat 5]
"""

import argparse
import time

import numpy as np

from duelbench import _pykernels

try:
    from duelbench import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(n, d, seed):
    rng = np.random.default_rng(seed)
    X = np.ascontiguousarray(rng.standard_normal((n, d)))
    y = (X[:, 0] * X[:, 1] + 0.5 * X[:, 2] > 0).astype(np.float64)
    order = np.ascontiguousarray(np.stack([np.argsort(X[:, f], kind="stable") for f in range(d)]))
    w = np.ones(n)
    Q = np.ascontiguousarray(rng.standard_normal((n // 4, d)))
    return {
        "tree depth 6": lambda K: K.build_tree(X, order, y * w, w.copy(), w, 6, 0, 1.0, 0.0, d, 1),
        "forest 20x6": lambda K: K.fit_forest(X, order, y, 20, 6, 1.0, 3, 1),
        "boosting 20x3": lambda K: K.fit_boosting(X, order, y, 20, 0.1, 3, 0, 1.0, 1.0, 0.0),
        "knn k=15": lambda K: K.knn_scores(X, y, Q, 15, True),
        "logreg 300 it": lambda K: K.logreg_fit(X, y, 0.01, 300, 0.05),
        "linear svm 300 it": lambda K: K.linsvm_fit(X, 2 * y - 1, 0.01, 300),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=640)
    ap.add_argument("--d", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
    print(f"{'kernel':<20}{'python ms':>12}{'compiled ms':>14}{'speedup':>10}")
    for name, run in cases(args.n, args.d, args.seed).items():
        py = best_of(lambda: run(_pykernels), max(1, args.repeat // 2))
        if _kernels is None:
            print(f"{name:<20}{py * 1e3:>12.2f}{'-':>14}{'-':>10}")
            continue
        c = best_of(lambda: run(_kernels), args.repeat)
        print(f"{name:<20}{py * 1e3:>12.2f}{c * 1e3:>14.3f}{py / c:>9.1f}x")


if __name__ == "__main__":
    main()
