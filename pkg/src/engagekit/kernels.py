"""Hot numeric kernels.

Every kernel exists twice: a loop formulation compiled with numba
(``_nb_*``) and a vectorised numpy formulation (``_np_*``). The public
names dispatch on :data:`engagekit._accel.USE_NUMBA`; both variants stay
importable so they can be cross-checked and benchmarked against each other.

Tree arrays use the layout ``feature, threshold, left, right, n_pos, n_total``
with ``feature == -1`` marking a leaf.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

_MASK64 = (1 << 64) - 1
_TAU = 1e-12


# ---------------------------------------------------------------------------
# splitmix64: tiny PRNG shared by both tree builders so they draw identical
# feature subsets for a given seed.

@njit
def _nb_splitmix_next(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


def _py_splitmix_next(state):
    state = (int(state) + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


# ---------------------------------------------------------------------------
# pairwise squared euclidean distances

@njit
def _nb_sq_dists(A, B):
    n, m, d = A.shape[0], B.shape[0], A.shape[1]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(d):
                t = A[i, k] - B[j, k]
                s += t * t
            out[i, j] = s
    return out


def _np_sq_dists(A, B):
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


# ---------------------------------------------------------------------------
# Lloyd iterations

@njit
def _nb_lloyd(X, centers, max_iter):
    n, d = X.shape
    k = centers.shape[0]
    centers = centers.copy()
    labels = np.full(n, -1, dtype=np.int64)
    dist = np.empty(n)
    n_iter = 0
    for it in range(max_iter):
        n_iter = it + 1
        changed = False
        for i in range(n):
            best = -1
            best_d = np.inf
            for c in range(k):
                s = 0.0
                for f in range(d):
                    t = X[i, f] - centers[c, f]
                    s += t * t
                if s < best_d:
                    best_d = s
                    best = c
            dist[i] = best_d
            if labels[i] != best:
                labels[i] = best
                changed = True
        if not changed:
            break
        sums = np.zeros((k, d))
        counts = np.zeros(k, dtype=np.int64)
        for i in range(n):
            counts[labels[i]] += 1
            for f in range(d):
                sums[labels[i], f] += X[i, f]
        for c in range(k):
            if counts[c] > 0:
                for f in range(d):
                    centers[c, f] = sums[c, f] / counts[c]
            else:
                far = np.argmax(dist)
                for f in range(d):
                    centers[c, f] = X[far, f]
                dist[far] = 0.0
    inertia = 0.0
    for i in range(n):
        inertia += dist[i]
    return centers, labels, inertia, n_iter


def _np_lloyd(X, centers, max_iter):
    centers = centers.copy()
    labels = np.full(X.shape[0], -1, dtype=np.int64)
    dist = np.zeros(X.shape[0])
    n_iter = 0
    for it in range(max_iter):
        n_iter = it + 1
        d2 = _np_sq_dists(X, centers)
        new = np.argmin(d2, axis=1)
        dist = d2[np.arange(X.shape[0]), new]
        if np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=centers.shape[0])
        for c in range(centers.shape[0]):
            if counts[c] > 0:
                centers[c] = X[labels == c].sum(axis=0) / counts[c]
            else:
                far = int(np.argmax(dist))
                centers[c] = X[far]
                dist[far] = 0.0
    return centers, labels, float(dist.sum()), n_iter


# ---------------------------------------------------------------------------
# decision tree construction

@njit
def _nb_entropy(c, n):
    if c == 0 or c == n:
        return 0.0
    p = c / n
    q = 1.0 - p
    return -(p * np.log2(p) + q * np.log2(q))


@njit
def _nb_best_feature_split(X, y, idx, start, end, f, min_leaf, parent_h):
    n = end - start
    vals = np.empty(n)
    ys = np.empty(n, dtype=np.int64)
    for i in range(n):
        vals[i] = X[idx[start + i], f]
        ys[i] = y[idx[start + i]]
    order = np.argsort(vals)  # tie order is irrelevant: equal-valued boundaries are skipped
    total_pos = 0
    for i in range(n):
        total_pos += ys[i]
    best_gain = -1.0
    best_thr = 0.0
    best_nl = 0
    left_pos = 0
    for i in range(n - 1):
        left_pos += ys[order[i]]
        nl = i + 1
        nr = n - nl
        v0 = vals[order[i]]
        v1 = vals[order[i + 1]]
        if v0 == v1 or nl < min_leaf or nr < min_leaf:
            continue
        h = (nl / n) * _nb_entropy(left_pos, nl) + (nr / n) * _nb_entropy(total_pos - left_pos, nr)
        gain = parent_h - h
        if gain > best_gain:
            best_gain = gain
            thr = 0.5 * (v0 + v1)
            if thr >= v1:
                thr = v0
            best_thr = thr
            best_nl = nl
    split_info = _nb_entropy(best_nl, n) if best_gain >= 0.0 else 0.0
    return best_gain, best_thr, split_info


@njit
def _nb_build_tree(X, y, sample_idx, max_depth, min_leaf, max_features, gain_ratio, seed):
    n_samples = sample_idx.shape[0]
    d = X.shape[1]
    cap = 2 * n_samples + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    n_pos = np.zeros(cap, dtype=np.int64)
    n_total = np.zeros(cap, dtype=np.int64)

    idx = sample_idx.copy()
    buf = np.empty(n_samples, dtype=np.int64)
    feats = np.arange(d)
    gains = np.empty(d)
    thrs = np.empty(d)
    infos = np.empty(d)
    state = np.uint64(seed)

    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_samples
    st_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        n = end - start
        pos = 0
        for i in range(start, end):
            pos += y[idx[i]]
        n_pos[node] = pos
        n_total[node] = n
        if pos == 0 or pos == n or depth == max_depth or n < 2 * min_leaf:
            continue

        n_cand = d
        if max_features < d:
            n_cand = max_features
            for j in range(n_cand):
                state, z = _nb_splitmix_next(state)
                r = j + np.int64(z % np.uint64(d - j))
                tmp = feats[j]
                feats[j] = feats[r]
                feats[r] = tmp

        parent_h = _nb_entropy(pos, n)
        for j in range(n_cand):
            g, t, si = _nb_best_feature_split(X, y, idx, start, end, feats[j], min_leaf, parent_h)
            gains[j] = g
            thrs[j] = t
            infos[j] = si

        chosen = -1
        if gain_ratio:
            total = 0.0
            cnt = 0
            for j in range(n_cand):
                if gains[j] > _TAU:
                    total += gains[j]
                    cnt += 1
            if cnt > 0:
                mean_gain = total / cnt
                best_ratio = -1.0
                for j in range(n_cand):
                    if gains[j] > _TAU and gains[j] >= mean_gain - _TAU:
                        ratio = gains[j] / infos[j]
                        if ratio > best_ratio:
                            best_ratio = ratio
                            chosen = j
        else:
            best = _TAU
            for j in range(n_cand):
                if gains[j] > best:
                    best = gains[j]
                    chosen = j
        if chosen < 0:
            continue

        f = feats[chosen]
        thr = thrs[chosen]
        nl = 0
        for i in range(start, end):
            if X[idx[i], f] <= thr:
                buf[nl] = idx[i]
                nl += 1
        k = nl
        for i in range(start, end):
            if X[idx[i], f] > thr:
                buf[k] = idx[i]
                k += 1
        for i in range(n):
            idx[start + i] = buf[i]

        feature[node] = f
        threshold[node] = thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        # push right first so the left subtree is numbered first
        st_node[top] = rc
        st_start[top] = start + nl
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lc
        st_start[top] = start
        st_end[top] = start + nl
        st_depth[top] = depth + 1
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), n_pos[:n_nodes].copy(), n_total[:n_nodes].copy())


def _np_entropy(c, n):
    c = np.asarray(c, dtype=float)
    n = np.asarray(n, dtype=float)
    p = np.divide(c, n, out=np.zeros_like(c), where=n > 0)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log2(p) + q * np.log2(q))
    return np.where((c == 0) | (c == n), 0.0, h)


def _np_best_feature_split(vals, ys, min_leaf, parent_h):
    n = vals.shape[0]
    order = np.argsort(vals, kind="stable")
    v = vals[order]
    cum = np.cumsum(ys[order])[:-1]
    nl = np.arange(1, n)
    nr = n - nl
    valid = (v[:-1] != v[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return -1.0, 0.0, 0.0
    h = (nl / n) * _np_entropy(cum, nl) + (nr / n) * _np_entropy(cum[-1] + ys[order[-1]] - cum, nr)
    gain = np.where(valid, parent_h - h, -np.inf)
    i = int(np.argmax(gain))
    thr = 0.5 * (v[i] + v[i + 1])
    if thr >= v[i + 1]:
        thr = v[i]
    return float(gain[i]), float(thr), float(_np_entropy(nl[i], n))


def _np_build_tree(X, y, sample_idx, max_depth, min_leaf, max_features, gain_ratio, seed):
    d = X.shape[1]
    feature, threshold, left, right, n_pos, n_total = [], [], [], [], [], []
    feats = np.arange(d)
    state = int(seed) & _MASK64

    def new_node():
        for arr, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (n_pos, 0), (n_total, 0)):
            arr.append(v)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.asarray(sample_idx, dtype=np.int64), 0)]
    while stack:
        node, idx, depth = stack.pop()
        n = idx.shape[0]
        ys = y[idx]
        pos = int(ys.sum())
        n_pos[node] = pos
        n_total[node] = n
        if pos == 0 or pos == n or depth == max_depth or n < 2 * min_leaf:
            continue
        n_cand = d
        if max_features < d:
            n_cand = max_features
            for j in range(n_cand):
                state, z = _py_splitmix_next(state)
                r = j + z % (d - j)
                feats[j], feats[r] = feats[r], feats[j]
        parent_h = float(_np_entropy(pos, n))
        res = [_np_best_feature_split(X[idx, feats[j]], ys, min_leaf, parent_h) for j in range(n_cand)]
        gains = np.array([r[0] for r in res])
        chosen = -1
        if gain_ratio:
            ok = gains > _TAU
            if ok.any():
                mean_gain = gains[ok].sum() / ok.sum()
                best_ratio = -1.0
                for j in range(n_cand):
                    if ok[j] and gains[j] >= mean_gain - _TAU:
                        ratio = gains[j] / res[j][2]
                        if ratio > best_ratio:
                            best_ratio, chosen = ratio, j
        else:
            best = _TAU
            for j in range(n_cand):
                if gains[j] > best:
                    best, chosen = gains[j], j
        if chosen < 0:
            continue
        f = int(feats[chosen])
        thr = res[chosen][1]
        go_left = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        lc = new_node()
        rc = new_node()
        left[node] = lc
        right[node] = rc
        stack.append((rc, idx[~go_left], depth + 1))
        stack.append((lc, idx[go_left], depth + 1))

    return (np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64), np.array(n_pos, dtype=np.int64), np.array(n_total, dtype=np.int64))


@njit
def _nb_apply_tree(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


def _np_apply_tree(X, feature, threshold, left, right):
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = feature[node] >= 0
    while active.any():
        r = rows[active]
        nd = node[r]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[r] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return node


# ---------------------------------------------------------------------------
# SMO for the soft-margin SVM dual (second-order working-set selection)

@njit
def _nb_smo(K, y, C, tol, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    converged = False
    while it < max_iter:
        # select i
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * G[t]
                if v > gmax:
                    gmax = v
                    i = t
        gmin = np.inf
        j = -1
        obj_min = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = -y[t] * G[t]
                if v < gmin:
                    gmin = v
                if i >= 0:
                    b = gmax - v
                    if b > 0:
                        a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if a <= 0:
                            a = _TAU
                        o = -(b * b) / a
                        if o < obj_min:
                            obj_min = o
                            j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            converged = True
            break
        it += 1
        ai_old = alpha[i]
        aj_old = alpha[j]
        if y[i] != y[j]:
            quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
            if quad <= 0:
                quad = _TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
            if quad <= 0:
                quad = _TAU
            delta = (G[i] - G[j]) / quad
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        dai = alpha[i] - ai_old
        daj = alpha[j] - aj_old
        for t in range(n):
            G[t] += y[t] * (y[i] * K[t, i] * dai + y[j] * K[t, j] * daj)

    # offset from free vectors, else midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    s = 0.0
    nfree = 0
    for t in range(n):
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            s += yg
    rho = s / nfree if nfree > 0 else 0.5 * (ub + lb)
    return alpha, -rho, it, converged


def _np_smo(K, y, C, tol, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    diagK = np.diag(K).copy()
    it = 0
    converged = False
    while it < max_iter:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        minus_yg = -y * G
        if not up.any() or not low.any():
            converged = True
            break
        cand = np.where(up, minus_yg, -np.inf)
        i = int(np.argmax(cand))
        gmax = cand[i]
        gmin = np.min(np.where(low, minus_yg, np.inf))
        b = gmax - minus_yg
        ok = low & (b > 0)
        if gmax - gmin < tol or not ok.any():
            converged = True
            break
        a = diagK[i] + diagK - 2.0 * K[i]
        a = np.where(a <= 0, _TAU, a)
        obj = np.where(ok, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        it += 1
        ai_old, aj_old = alpha[i], alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = _TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            ai, aj = alpha[i] + delta, alpha[j] + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
                if ai > C:
                    ai, aj = C, C - diff
            else:
                if ai < 0:
                    ai, aj = 0.0, -diff
                if aj > C:
                    aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            s = alpha[i] + alpha[j]
            ai, aj = alpha[i] - delta, alpha[j] + delta
            if s > C:
                if ai > C:
                    ai, aj = C, s - C
                if aj > C:
                    aj, ai = C, s - C
            else:
                if aj < 0:
                    aj, ai = 0.0, s
                if ai < 0:
                    ai, aj = 0.0, s
        alpha[i], alpha[j] = ai, aj
        G += y * (y[i] * K[:, i] * (ai - ai_old) + y[j] * K[:, j] * (aj - aj_old))

    yg = y * G
    at_c = alpha >= C
    at_0 = alpha <= 0
    free = ~at_c & ~at_0
    if free.any():
        rho = float(yg[free].sum() / free.sum())
    else:
        ub_mask = (at_c & (y < 0)) | (at_0 & (y > 0))
        lb_mask = (at_c & (y > 0)) | (at_0 & (y < 0))
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = 0.5 * (ub + lb)
    return alpha, -rho, it, converged


# ---------------------------------------------------------------------------
# dispatch

if USE_NUMBA:
    sq_dists = _nb_sq_dists
    lloyd = _nb_lloyd
    build_tree = _nb_build_tree
    apply_tree = _nb_apply_tree
    smo = _nb_smo
else:
    sq_dists = _np_sq_dists
    lloyd = _np_lloyd
    build_tree = _np_build_tree
    apply_tree = _np_apply_tree
    smo = _np_smo

BACKENDS = {
    "numba": {"sq_dists": _nb_sq_dists, "lloyd": _nb_lloyd, "build_tree": _nb_build_tree,
              "apply_tree": _nb_apply_tree, "smo": _nb_smo},
    "numpy": {"sq_dists": _np_sq_dists, "lloyd": _np_lloyd, "build_tree": _np_build_tree,
              "apply_tree": _np_apply_tree, "smo": _np_smo},
}
