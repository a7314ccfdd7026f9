# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: tree growth (single trees, bagged forests, Newton
boosting), ensemble prediction, kNN scoring and the two linear-model descent
loops.

Arithmetic order matches ``_pykernels`` so trees, ensembles and kNN scores agree
bit for bit between backends.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt
from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double MIN_GAIN = 1e-12


cdef inline uint64_t _splitmix(uint64_t* state) noexcept nogil:
    cdef uint64_t z
    state[0] += <uint64_t>0x9E3779B97F4A7C15ULL
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef struct Node:
    int64_t start
    int64_t end
    int64_t depth
    double G
    double H
    double W
    double gain
    int64_t feat
    double thr
    int64_t pos
    double GL
    double HL
    double WL
    int64_t left
    int64_t right


cdef struct Work:
    Node* nodes
    int64_t* open_ids
    int64_t* perm
    int64_t* feats
    int64_t* buf
    char* goes_left


cdef struct Out:
    int64_t* feature
    double* threshold
    int64_t* left
    int64_t* right
    double* value


cdef Out _bind(tuple arrays):
    cdef Out out
    cdef int64_t[::1] f = arrays[0], l = arrays[2], r = arrays[3]
    cdef double[::1] t = arrays[1], v = arrays[4]
    out.feature = &f[0]
    out.threshold = &t[0]
    out.left = &l[0]
    out.right = &r[0]
    out.value = &v[0]
    return out


cdef int _work_alloc(Work* ws, int64_t cap, int64_t n, int64_t d) except -1:
    ws.nodes = <Node*>malloc(cap * sizeof(Node))
    ws.open_ids = <int64_t*>malloc(cap * sizeof(int64_t))
    ws.perm = <int64_t*>malloc((d + 1) * sizeof(int64_t))
    ws.feats = <int64_t*>malloc((d + 1) * sizeof(int64_t))
    ws.buf = <int64_t*>malloc((n + 1) * sizeof(int64_t))
    ws.goes_left = <char*>malloc((n + 1) * sizeof(char))
    if not (ws.nodes and ws.open_ids and ws.perm and ws.feats and ws.buf and ws.goes_left):
        _work_free(ws)
        raise MemoryError()
    cdef int64_t i
    for i in range(n):
        ws.goes_left[i] = 0
    return 0


cdef void _work_free(Work* ws) noexcept:
    free(ws.nodes)
    free(ws.open_ids)
    free(ws.perm)
    free(ws.feats)
    free(ws.buf)
    free(ws.goes_left)


cdef int64_t _capacity(int64_t max_depth, int64_t max_leaves, int64_t m) noexcept:
    cdef int64_t leaves = max_leaves if max_leaves > 0 else m
    if m < leaves:
        leaves = m
    if leaves < 1:
        leaves = 1
    if 0 <= max_depth < 40 and (<int64_t>1 << max_depth) < leaves:
        leaves = <int64_t>1 << max_depth
    return 2 * leaves + 1


cdef void _find_split(const double[:, ::1] X, int64_t[:, ::1] order,
                      const double[::1] wg, const double[::1] wh, const double[::1] w,
                      Node* node, double lam, double min_leaf,
                      int64_t* feats, int64_t nfeats) noexcept nogil:
    cdef int64_t fi, f, i, s, start = node.start, end = node.end
    cdef double GL, HL, WL, GR, HR, gain, parent, xv, xn, thr
    cdef double G = node.G, H = node.H, W = node.W
    node.gain = MIN_GAIN
    node.feat = -1
    if W < 2.0 * min_leaf or end - start < 2:
        return
    parent = G * G / (H + lam)
    for fi in range(nfeats):
        f = feats[fi]
        GL = 0.0
        HL = 0.0
        WL = 0.0
        for i in range(start, end - 1):
            s = order[f, i]
            GL = GL + wg[s]
            HL = HL + wh[s]
            WL = WL + w[s]
            xv = X[s, f]
            xn = X[order[f, i + 1], f]
            if xv < xn and WL >= min_leaf and (W - WL) >= min_leaf:
                GR = G - GL
                HR = H - HL
                gain = GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent
                if gain > node.gain:
                    thr = 0.5 * (xv + xn)
                    if thr >= xn:
                        thr = xv
                    node.gain = gain
                    node.feat = f
                    node.thr = thr
                    node.pos = i + 1 - start
                    node.GL = GL
                    node.HL = HL
                    node.WL = WL


cdef int64_t _choose(int64_t d, int64_t k, uint64_t* state, int64_t* perm,
                     int64_t* out) noexcept nogil:
    cdef int64_t j, pick, tmp, a, b
    if k >= d:
        for j in range(d):
            out[j] = j
        return d
    for j in range(d):
        perm[j] = j
    for j in range(k):
        pick = j + <int64_t>(_splitmix(state) % <uint64_t>(d - j))
        tmp = perm[j]
        perm[j] = perm[pick]
        perm[pick] = tmp
    for j in range(k):
        out[j] = perm[j]
    # ascending feature order keeps the (feature, threshold) tie rule
    for a in range(1, k):
        tmp = out[a]
        b = a - 1
        while b >= 0 and out[b] > tmp:
            out[b + 1] = out[b]
            b -= 1
        out[b + 1] = tmp
    return k


cdef void _prepare(const double[:, ::1] X, int64_t[:, ::1] order, const double[::1] wg,
                   const double[::1] wh, const double[::1] w, Node* node,
                   int64_t max_depth, double min_leaf, double lam, int64_t k,
                   uint64_t* state, Work* ws) noexcept nogil:
    cdef int64_t nf
    node.feat = -1
    node.gain = MIN_GAIN
    node.left = -1
    node.right = -1
    if node.depth >= max_depth:
        return
    nf = _choose(order.shape[0], k, state, ws.perm, ws.feats)
    _find_split(X, order, wg, wh, w, node, lam, min_leaf, ws.feats, nf)


cdef int64_t _grow(const double[:, ::1] X, int64_t[:, ::1] order, int64_t m,
                   const double[::1] wg, const double[::1] wh, const double[::1] w,
                   int64_t max_depth, int64_t max_leaves, double min_leaf, double lam,
                   int64_t k, uint64_t* state, Work* ws) noexcept nogil:
    """Grow one tree over the first ``m`` columns of ``order`` (permuted in place).
    Nodes land in ``ws.nodes``; returns the node count."""
    cdef int64_t d = order.shape[0], n_nodes = 1, n_open = 1, leaves = 1
    cdef int64_t i, j, pick, oi, g, s, nl, nr, f, start, end, pos, li
    cdef double G = 0.0, H = 0.0, W = 0.0
    cdef Node* nodes = ws.nodes
    if max_depth < 0:
        max_depth = 1 << 30
    if max_leaves <= 0:
        max_leaves = 1 << 30
    for i in range(m):
        s = order[0, i]
        G = G + wg[s]
        H = H + wh[s]
        W = W + w[s]
    nodes[0].start = 0
    nodes[0].end = m
    nodes[0].depth = 0
    nodes[0].G = G
    nodes[0].H = H
    nodes[0].W = W
    _prepare(X, order, wg, wh, w, &nodes[0], max_depth, min_leaf, lam, k, state, ws)
    ws.open_ids[0] = 0
    while leaves < max_leaves:
        pick = -1
        oi = -1
        for j in range(n_open):
            i = ws.open_ids[j]
            if nodes[i].feat >= 0 and (pick < 0 or nodes[i].gain > nodes[pick].gain):
                pick = i
                oi = j
        if pick < 0:
            break
        start = nodes[pick].start
        end = nodes[pick].end
        pos = nodes[pick].pos
        f = nodes[pick].feat
        for i in range(start, start + pos):
            ws.goes_left[order[f, i]] = 1
        for g in range(d):
            nl = 0
            nr = 0
            for i in range(start, end):
                s = order[g, i]
                if ws.goes_left[s]:
                    order[g, start + nl] = s
                    nl += 1
                else:
                    ws.buf[nr] = s
                    nr += 1
            for i in range(nr):
                order[g, start + nl + i] = ws.buf[i]
        for i in range(start, start + pos):
            ws.goes_left[order[f, i]] = 0

        li = n_nodes
        n_nodes += 2
        nodes[li].start = start
        nodes[li].end = start + pos
        nodes[li].G = nodes[pick].GL
        nodes[li].H = nodes[pick].HL
        nodes[li].W = nodes[pick].WL
        nodes[li + 1].start = start + pos
        nodes[li + 1].end = end
        nodes[li + 1].G = nodes[pick].G - nodes[pick].GL
        nodes[li + 1].H = nodes[pick].H - nodes[pick].HL
        nodes[li + 1].W = nodes[pick].W - nodes[pick].WL
        nodes[li].depth = nodes[li + 1].depth = nodes[pick].depth + 1
        nodes[pick].left = li
        nodes[pick].right = li + 1

        # open list stays in creation order, so gain ties go to the oldest node
        for j in range(oi, n_open - 1):
            ws.open_ids[j] = ws.open_ids[j + 1]
        ws.open_ids[n_open - 1] = li
        ws.open_ids[n_open] = li + 1
        n_open += 1
        _prepare(X, order, wg, wh, w, &nodes[li], max_depth, min_leaf, lam, k, state, ws)
        _prepare(X, order, wg, wh, w, &nodes[li + 1], max_depth, min_leaf, lam, k, state, ws)
        leaves += 1
    # internal nodes keep their split; open nodes that were never expanded are leaves
    for i in range(n_nodes):
        if nodes[i].left < 0:
            nodes[i].feat = -1
    return n_nodes


cdef void _emit(Work* ws, int64_t n_nodes, int64_t offset, double lam, Out* out) noexcept nogil:
    cdef int64_t i
    cdef Node* nd
    for i in range(n_nodes):
        nd = &ws.nodes[i]
        out.feature[offset + i] = nd.feat
        if nd.feat >= 0:
            out.threshold[offset + i] = nd.thr
            out.left[offset + i] = nd.left + offset
            out.right[offset + i] = nd.right + offset
        else:
            out.threshold[offset + i] = 0.0
            out.left[offset + i] = -1
            out.right[offset + i] = -1
        out.value[offset + i] = nd.G / (nd.H + lam)


def _outputs(int64_t cap):
    return (np.full(cap, -1, dtype=np.int64), np.zeros(cap, dtype=np.float64),
            np.full(cap, -1, dtype=np.int64), np.full(cap, -1, dtype=np.int64),
            np.zeros(cap, dtype=np.float64))


def build_tree(const double[:, ::1] X, order_in, const double[::1] wg,
               const double[::1] wh, const double[::1] w, int64_t max_depth,
               int64_t max_leaves, double min_leaf, double reg_lambda,
               int64_t max_features, uint64_t seed):
    cdef int64_t[:, ::1] order = np.array(order_in, dtype=np.int64, copy=True, order="C")
    cdef int64_t d = order.shape[0], m = order.shape[1], n = X.shape[0]
    cdef int64_t k = max_features if 0 < max_features < d else d
    cdef int64_t cap = _capacity(max_depth, max_leaves, m), n_nodes
    cdef uint64_t state = seed
    cdef Work ws
    arrays = _outputs(cap)
    feature, threshold, left, right, value = arrays
    cdef Out out = _bind(arrays)
    _work_alloc(&ws, cap, n, d)
    try:
        with nogil:
            n_nodes = _grow(X, order, m, wg, wh, w, max_depth, max_leaves, min_leaf,
                            reg_lambda, k, &state, &ws)
            _emit(&ws, n_nodes, 0, reg_lambda, &out)
    finally:
        _work_free(&ws)
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


def fit_forest(const double[:, ::1] X, const int64_t[:, ::1] order, const double[::1] y,
               int64_t n_trees, int64_t max_depth, double min_leaf, int64_t max_features,
               uint64_t seed):
    """Bagged gini trees. One SplitMix64 stream drives, per tree, n bootstrap draws
    followed by the per-node feature subsets."""
    cdef int64_t d = order.shape[0], n = order.shape[1]
    cdef int64_t k = max_features if 0 < max_features < d else d
    cdef int64_t cap = _capacity(max_depth, 0, n), offset = 0, t, i, f, j, m, n_nodes, s
    cdef uint64_t state = seed
    cdef int64_t[:, ::1] work = np.empty((d, n), dtype=np.int64)
    counts_a = np.zeros(n, dtype=np.float64)
    wg_a = np.zeros(n, dtype=np.float64)
    cdef double[::1] counts = counts_a, wg = wg_a
    cdef Work ws
    arrays = _outputs(max(cap * n_trees, 1))
    feature, threshold, left, right, value = arrays
    cdef Out out = _bind(arrays)
    roots = np.zeros(n_trees, dtype=np.int64)
    cdef int64_t[::1] roots_v = roots
    _work_alloc(&ws, cap, n, d)
    try:
        with nogil:
            for t in range(n_trees):
                for i in range(n):
                    counts[i] = 0.0
                for i in range(n):
                    counts[<int64_t>(_splitmix(&state) % <uint64_t>n)] += 1.0
                for i in range(n):
                    wg[i] = counts[i] * y[i]
                m = 0
                for f in range(d):
                    j = 0
                    for i in range(n):
                        s = order[f, i]
                        if counts[s] > 0.0:
                            work[f, j] = s
                            j += 1
                    m = j
                n_nodes = _grow(X, work, m, wg, counts, counts, max_depth, 0, min_leaf,
                                0.0, k, &state, &ws)
                _emit(&ws, n_nodes, offset, 0.0, &out)
                roots_v[t] = offset
                offset += n_nodes
    finally:
        _work_free(&ws)
    return (feature[:offset].copy(), threshold[:offset].copy(), left[:offset].copy(),
            right[:offset].copy(), value[:offset].copy(), roots)


def fit_boosting(const double[:, ::1] X, const int64_t[:, ::1] order, const double[::1] y,
                 int64_t n_rounds, double learning_rate, int64_t max_depth,
                 int64_t max_leaves, double min_leaf, double reg_lambda, double base_score):
    """Newton boosting on logistic loss: per round g = y - p, h = p(1 - p)."""
    cdef int64_t d = order.shape[0], n = order.shape[1]
    cdef int64_t cap = _capacity(max_depth, max_leaves, n), offset = 0, r, i, f, n_nodes, s
    cdef uint64_t state = 0
    cdef double p, v
    cdef int64_t[:, ::1] work = np.empty((d, n), dtype=np.int64)
    F_a = np.full(n, base_score, dtype=np.float64)
    g_a = np.zeros(n, dtype=np.float64)
    h_a = np.zeros(n, dtype=np.float64)
    ones_a = np.ones(n, dtype=np.float64)
    cdef double[::1] F = F_a, g = g_a, h = h_a, ones = ones_a
    cdef Work ws
    arrays = _outputs(max(cap * n_rounds, 1))
    feature, threshold, left, right, value = arrays
    cdef Out out = _bind(arrays)
    roots = np.zeros(n_rounds, dtype=np.int64)
    cdef int64_t[::1] roots_v = roots
    _work_alloc(&ws, cap, n, d)
    try:
        with nogil:
            for r in range(n_rounds):
                for i in range(n):
                    p = 1.0 / (1.0 + exp(-F[i]))
                    g[i] = y[i] - p
                    h[i] = p * (1.0 - p)
                for f in range(d):
                    for i in range(n):
                        work[f, i] = order[f, i]
                n_nodes = _grow(X, work, n, g, h, ones, max_depth, max_leaves, min_leaf,
                                reg_lambda, d, &state, &ws)
                _emit(&ws, n_nodes, offset, reg_lambda, &out)
                for i in range(n_nodes):
                    if ws.nodes[i].feat < 0:
                        v = learning_rate * out.value[offset + i]
                        for s in range(ws.nodes[i].start, ws.nodes[i].end):
                            F[work[0, s]] = F[work[0, s]] + v
                roots_v[r] = offset
                offset += n_nodes
    finally:
        _work_free(&ws)
    return (feature[:offset].copy(), threshold[:offset].copy(), left[:offset].copy(),
            right[:offset].copy(), value[:offset].copy(), roots)


cdef inline double _leaf(const int64_t[::1] feature, const double[::1] threshold,
                         const int64_t[::1] left, const int64_t[::1] right,
                         const double[::1] value, const double[:, ::1] X, int64_t i,
                         int64_t node) noexcept nogil:
    while feature[node] >= 0:
        if X[i, feature[node]] <= threshold[node]:
            node = left[node]
        else:
            node = right[node]
    return value[node]


def predict_tree(const int64_t[::1] feature, const double[::1] threshold,
                 const int64_t[::1] left, const int64_t[::1] right,
                 const double[::1] value, const double[:, ::1] X):
    cdef int64_t n = X.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] out_v = out
    with nogil:
        for i in range(n):
            out_v[i] = _leaf(feature, threshold, left, right, value, X, i, 0)
    return out


def predict_forest(const int64_t[::1] feature, const double[::1] threshold,
                   const int64_t[::1] left, const int64_t[::1] right,
                   const double[::1] value, const int64_t[::1] roots, const double[:, ::1] X):
    """Mean leaf value over trees."""
    cdef int64_t n = X.shape[0], nt = roots.shape[0], i, t
    cdef double total
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] out_v = out
    with nogil:
        for i in range(n):
            total = 0.0
            for t in range(nt):
                total = total + _leaf(feature, threshold, left, right, value, X, i, roots[t])
            out_v[i] = total / nt
    return out


def predict_boosting(const int64_t[::1] feature, const double[::1] threshold,
                     const int64_t[::1] left, const int64_t[::1] right,
                     const double[::1] value, const int64_t[::1] roots, const double[:, ::1] X,
                     double learning_rate, double base_score):
    cdef int64_t n = X.shape[0], nt = roots.shape[0], i, t
    cdef double F
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] out_v = out
    with nogil:
        for i in range(n):
            F = base_score
            for t in range(nt):
                F = F + learning_rate * _leaf(feature, threshold, left, right, value, X, i,
                                              roots[t])
            out_v[i] = F
    return out


def knn_scores(const double[:, ::1] Xtr, const double[::1] ytr, const double[:, ::1] Xq,
               int64_t k, bint weighted):
    cdef int64_t nt = Xtr.shape[0], nq = Xq.shape[0], d = Xtr.shape[1]
    cdef int64_t q, j, f, c, pos, zeros
    cdef double d2, diff, num, den, wt
    if k > nt:
        k = nt
    out = np.empty(nq, dtype=np.float64)
    cdef double[::1] out_v = out
    cdef double* bd = <double*>malloc((k + 1) * sizeof(double))
    cdef int64_t* bi = <int64_t*>malloc((k + 1) * sizeof(int64_t))
    try:
        with nogil:
            for q in range(nq):
                c = 0
                for j in range(nt):
                    d2 = 0.0
                    for f in range(d):
                        diff = Xq[q, f] - Xtr[j, f]
                        d2 = d2 + diff * diff
                    if c == k and d2 >= bd[k - 1]:
                        continue
                    # insertion after equal distances keeps ties in training order
                    pos = c if c < k else k - 1
                    while pos > 0 and bd[pos - 1] > d2:
                        bd[pos] = bd[pos - 1]
                        bi[pos] = bi[pos - 1]
                        pos -= 1
                    bd[pos] = d2
                    bi[pos] = j
                    if c < k:
                        c += 1
                num = 0.0
                if not weighted:
                    for j in range(k):
                        num = num + ytr[bi[j]]
                    out_v[q] = num / k
                    continue
                zeros = 0
                for j in range(k):
                    if bd[j] == 0.0:
                        zeros += 1
                        num = num + ytr[bi[j]]
                if zeros > 0:
                    out_v[q] = num / zeros
                    continue
                den = 0.0
                for j in range(k):
                    wt = 1.0 / sqrt(bd[j])
                    num = num + wt * ytr[bi[j]]
                    den = den + wt
                out_v[q] = num / den
    finally:
        free(bd)
        free(bi)
    return out


def logreg_fit(const double[:, ::1] X, const double[::1] y, double l2, int64_t n_iter,
               double step):
    cdef int64_t n = X.shape[0], d = X.shape[1], it, i, f
    cdef double b = 0.0, gb, z, p, r
    w = np.zeros(d, dtype=np.float64)
    gw = np.zeros(d, dtype=np.float64)
    cdef double[::1] w_v = w, gw_v = gw
    with nogil:
        for it in range(n_iter):
            for f in range(d):
                gw_v[f] = 0.0
            gb = 0.0
            for i in range(n):
                z = b
                for f in range(d):
                    z = z + w_v[f] * X[i, f]
                p = 1.0 / (1.0 + exp(-z))
                r = p - y[i]
                gb = gb + r
                for f in range(d):
                    gw_v[f] = gw_v[f] + r * X[i, f]
            for f in range(d):
                w_v[f] = w_v[f] - step * (gw_v[f] / n + l2 * w_v[f])
            b = b - step * (gb / n)
    return w, b


def linsvm_fit(const double[:, ::1] X, const double[::1] ypm, double lam, int64_t n_iter):
    cdef int64_t n = X.shape[0], d = X.shape[1], t, i, f
    cdef double b = 0.0, gb, eta, z, norm, radius = 1.0 / sqrt(lam), shrink
    w = np.zeros(d, dtype=np.float64)
    gw = np.zeros(d, dtype=np.float64)
    cdef double[::1] w_v = w, gw_v = gw
    with nogil:
        for t in range(1, n_iter + 1):
            eta = 1.0 / (lam * t)
            for f in range(d):
                gw_v[f] = 0.0
            gb = 0.0
            for i in range(n):
                z = b
                for f in range(d):
                    z = z + w_v[f] * X[i, f]
                if ypm[i] * z < 1.0:
                    gb = gb + ypm[i]
                    for f in range(d):
                        gw_v[f] = gw_v[f] + ypm[i] * X[i, f]
            shrink = 1.0 - eta * lam
            norm = 0.0
            for f in range(d):
                w_v[f] = shrink * w_v[f] + eta * (gw_v[f] / n)
                norm = norm + w_v[f] * w_v[f]
            b = shrink * b + eta * (gb / n)
            norm = sqrt(norm + b * b)
            if norm > radius:
                for f in range(d):
                    w_v[f] = w_v[f] * (radius / norm)
                b = b * (radius / norm)
    return w, b
