"""Pure-Python/numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable or disabled with
``DUELBENCH_PURE_PYTHON=1``. Tree, kNN and the split search reproduce the
compiled arithmetic order (sequential accumulation via ``cumsum``), so both
backends grow identical trees and return bit-identical kNN scores. The two
linear learners use BLAS products here and agree with the compiled loops only
to rounding.
"""

from __future__ import annotations

import math

import numpy as np

from .rng import MASK64, splitmix64

MIN_GAIN = 1e-12


def _choose_features(d: int, k: int, state: int) -> tuple[list[int], int]:
    if k >= d:
        return list(range(d)), state
    perm = list(range(d))
    for j in range(k):
        state, r = splitmix64(state)
        pick = j + r % (d - j)
        perm[j], perm[pick] = perm[pick], perm[j]
    return sorted(perm[:k]), state


def _find_split(X, order, wg, wh, w, start, end, G, H, W, lam, min_leaf, feats):
    best_gain = MIN_GAIN
    best = None
    if W < 2.0 * min_leaf or end - start < 2:
        return best_gain, best
    parent = G * G / (H + lam)
    for f in feats:
        seg = order[f, start:end]
        xs = X[seg, f]
        GL = np.cumsum(wg[seg])[:-1]
        HL = np.cumsum(wh[seg])[:-1]
        WL = np.cumsum(w[seg])[:-1]
        ok = (xs[:-1] < xs[1:]) & (WL >= min_leaf) & ((W - WL) >= min_leaf)
        if not ok.any():
            continue
        GR = G - GL
        HR = H - HL
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent
        gain = np.where(ok, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best_gain:
            thr = 0.5 * (xs[i] + xs[i + 1])
            if thr >= xs[i + 1]:
                thr = xs[i]
            best_gain = float(gain[i])
            best = (f, float(thr), i + 1, float(GL[i]), float(HL[i]), float(WL[i]))
    return best_gain, best


def _grow(X, order, m, wg, wh, w, max_depth, max_leaves, min_leaf, lam, k, state):
    """Grow one tree over the first ``m`` columns of ``order`` (permuted in place).

    Returns (nodes, state); a node is [start, end, depth, G, H, W, gain, split,
    left, right] with ``split = (feature, threshold, pos, GL, HL, WL)`` or None.
    """
    d = order.shape[0]
    max_depth = max_depth if max_depth >= 0 else 1 << 30
    max_leaves = max_leaves if max_leaves > 0 else 1 << 30
    root = order[0, :m]
    G = float(np.cumsum(wg[root])[-1]) if m else 0.0
    H = float(np.cumsum(wh[root])[-1]) if m else 0.0
    W = float(np.cumsum(w[root])[-1]) if m else 0.0
    nodes = [[0, m, 0, G, H, W, MIN_GAIN, None, -1, -1]]

    def prepare(idx):
        nonlocal state
        start, end, depth, G, H, W = nodes[idx][:6]
        if depth >= max_depth:
            return
        feats, state = _choose_features(d, k, state)
        nodes[idx][6], nodes[idx][7] = _find_split(X, order, wg, wh, w, start, end, G, H, W,
                                                   lam, min_leaf, feats)

    prepare(0)
    open_nodes = [0]
    leaves = 1
    goes_left = np.zeros(X.shape[0], dtype=bool)
    while leaves < max_leaves:
        pick = -1
        for idx in open_nodes:
            if nodes[idx][7] is not None and (pick < 0 or nodes[idx][6] > nodes[pick][6]):
                pick = idx
        if pick < 0:
            break
        start, end, depth, G, H, W, _, split = nodes[pick][:8]
        f, thr, pos, GL, HL, WL = split
        goes_left[order[f, start:start + pos]] = True
        for g in range(d):
            seg = order[g, start:end]
            mask = goes_left[seg]
            order[g, start:end] = np.concatenate((seg[mask], seg[~mask]))
        goes_left[order[f, start:start + pos]] = False

        li = len(nodes)
        nodes.append([start, start + pos, depth + 1, GL, HL, WL, MIN_GAIN, None, -1, -1])
        nodes.append([start + pos, end, depth + 1, G - GL, H - HL, W - WL, MIN_GAIN, None,
                      -1, -1])
        nodes[pick][8], nodes[pick][9] = li, li + 1
        open_nodes.remove(pick)
        open_nodes += [li, li + 1]
        prepare(li)
        prepare(li + 1)
        leaves += 1
    return nodes, state


def _emit(nodes, lam, offset=0):
    feature, threshold, left, right, value = [], [], [], [], []
    for nd in nodes:
        internal = nd[8] >= 0
        feature.append(nd[7][0] if internal else -1)
        threshold.append(nd[7][1] if internal else 0.0)
        left.append(nd[8] + offset if internal else -1)
        right.append(nd[9] + offset if internal else -1)
        value.append(nd[3] / (nd[4] + lam))
    return (np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(value, dtype=np.float64))


def _concat(parts, n_trees):
    if not parts:
        return _emit([], 0.0) + (np.zeros(n_trees, dtype=np.int64),)
    arrays = tuple(np.concatenate(col) for col in zip(*parts))
    sizes = [len(p[0]) for p in parts]
    roots = np.r_[0, np.cumsum(sizes)[:-1]].astype(np.int64)
    return arrays + (roots,)


def build_tree(X, order, wg, wh, w, max_depth, max_leaves, min_leaf, reg_lambda,
               max_features, seed):
    X = np.asarray(X, dtype=np.float64)
    order = np.array(order, dtype=np.int64, copy=True)
    d, m = order.shape
    k = max_features if 0 < max_features < d else d
    nodes, _ = _grow(X, order, m, wg, wh, w, max_depth, max_leaves, min_leaf, reg_lambda, k,
                     seed & MASK64)
    return _emit(nodes, reg_lambda)


def fit_forest(X, order, y, n_trees, max_depth, min_leaf, max_features, seed):
    X = np.asarray(X, dtype=np.float64)
    d, n = order.shape
    k = max_features if 0 < max_features < d else d
    state = seed & MASK64
    parts, offset = [], 0
    for _ in range(n_trees):
        counts = np.zeros(n)
        for _ in range(n):
            state, r = splitmix64(state)
            counts[r % n] += 1.0
        active = (counts > 0)[order]
        work = order[active].reshape(d, -1).copy()
        nodes, state = _grow(X, work, work.shape[1], counts * y, counts, counts, max_depth,
                             0, min_leaf, 0.0, k, state)
        parts.append(_emit(nodes, 0.0, offset))
        offset += len(nodes)
    return _concat(parts, n_trees)


def _exp(v):
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


def fit_boosting(X, order, y, n_rounds, learning_rate, max_depth, max_leaves, min_leaf,
                 reg_lambda, base_score):
    X = np.asarray(X, dtype=np.float64)
    d, n = order.shape
    F = np.full(n, base_score)
    ones = np.ones(n)
    parts, offset = [], 0
    for _ in range(n_rounds):
        # libm exp, element by element, to match the compiled loop exactly
        p = np.array([1.0 / (1.0 + _exp(-v)) for v in F.tolist()])
        nodes, _ = _grow(X, order.copy(), n, y - p, p * (1.0 - p), ones, max_depth,
                         max_leaves, min_leaf, reg_lambda, d, 0)
        tree = _emit(nodes, reg_lambda)
        F += learning_rate * predict_tree(*tree, X)
        parts.append(_emit(nodes, reg_lambda, offset))
        offset += len(nodes)
    return _concat(parts, n_rounds)


def predict_tree(feature, threshold, left, right, value, X, root=0):
    X = np.asarray(X, dtype=np.float64)
    node = np.full(X.shape[0], root, dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = feature[node] >= 0
    while active.any():
        r = rows[active]
        nd = node[r]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[r] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return value[node]


def predict_forest(feature, threshold, left, right, value, roots, X):
    total = np.zeros(np.asarray(X).shape[0])
    for root in roots:
        total += predict_tree(feature, threshold, left, right, value, X, root)
    return total / len(roots)


def predict_boosting(feature, threshold, left, right, value, roots, X, learning_rate,
                     base_score):
    F = np.full(np.asarray(X).shape[0], base_score)
    for root in roots:
        F += learning_rate * predict_tree(feature, threshold, left, right, value, X, root)
    return F


def knn_scores(Xtr, ytr, Xq, k, weighted):
    Xtr = np.asarray(Xtr, dtype=np.float64)
    Xq = np.asarray(Xq, dtype=np.float64)
    ytr = np.asarray(ytr, dtype=np.float64)
    d2 = np.zeros((Xq.shape[0], Xtr.shape[0]))
    for f in range(Xtr.shape[1]):
        diff = Xq[:, f, None] - Xtr[None, :, f]
        d2 += diff * diff
    nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
    dist2 = np.take_along_axis(d2, nn, axis=1)
    labels = ytr[nn]
    if not weighted:
        return np.cumsum(labels, axis=1)[:, -1] / k
    out = np.empty(Xq.shape[0])
    zero = dist2 == 0.0
    has_zero = zero.any(axis=1)
    if has_zero.any():
        z = zero[has_zero]
        hits = np.cumsum(np.where(z, labels[has_zero], 0.0), axis=1)[:, -1]
        out[has_zero] = hits / z.sum(axis=1)
    rest = ~has_zero
    if rest.any():
        wts = 1.0 / np.sqrt(dist2[rest])
        num = np.cumsum(wts * labels[rest], axis=1)[:, -1]
        den = np.cumsum(wts, axis=1)[:, -1]
        out[rest] = num / den
    return out


def logreg_fit(X, y, l2, n_iter, step):
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(n_iter):
        z = X @ w + b
        p = 1.0 / (1.0 + np.exp(-z))
        r = p - y
        w = w - step * (X.T @ r / n + l2 * w)
        b = b - step * (r.sum() / n)
    return w, b


def linsvm_fit(X, ypm, lam, n_iter):
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    radius = 1.0 / np.sqrt(lam)
    for t in range(1, n_iter + 1):
        eta = 1.0 / (lam * t)
        margin = ypm * (X @ w + b)
        active = margin < 1.0
        gw = (ypm[active, None] * X[active]).sum(axis=0) / n
        gb = ypm[active].sum() / n
        w = (1.0 - eta * lam) * w + eta * gw
        b = (1.0 - eta * lam) * b + eta * gb
        norm = np.sqrt(w @ w + b * b)
        if norm > radius:
            w = w * (radius / norm)
            b = b * (radius / norm)
    return w, b
