"""numba kernels for tree growth, prediction and TreeSHAP.

Trees are stored as parallel node arrays (sklearn style): ``feature`` is -1 at
leaves; ``left``/``right`` are child ids; ``cover`` counts bootstrap rows that
reach the node (with multiplicity).
"""

import numpy as np
from numba import njit

_U64 = np.uint64


def writable(a: np.ndarray) -> np.ndarray:
    """C-contiguous writable view or copy.

    Kernels are compiled for writable arrays only; read-only inputs would
    trigger a second specialization, which breaks the recursive TreeSHAP
    kernel.
    """
    return np.require(a, requirements=["C", "W"])


_INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _rotl(x, k):
    return (x << _U64(k)) | (x >> _U64(64 - k))


@njit(cache=True)
def xoshiro_next(s):
    result = _rotl(s[0] + s[3], 23) + s[0]
    t = s[1] << _U64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True)
def xoshiro_random(s):
    return (xoshiro_next(s) >> _U64(11)) * _INV_2_53


@njit(cache=True)
def draw_indices(s, n, size):
    out = np.empty(size, dtype=np.int64)
    for i in range(size):
        out[i] = np.int64(xoshiro_random(s) * n)
    return out


@njit(cache=True)
def _choose_columns(s, p, n_try):
    """``n_try`` distinct columns by partial Fisher-Yates, returned sorted."""
    perm = np.arange(p)
    for i in range(n_try):
        j = i + np.int64(xoshiro_random(s) * (p - i))
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
    return np.sort(perm[:n_try])


@njit(cache=True)
def grow_tree(X, y, samples, max_depth, min_split, min_leaf, n_try, rng_state):
    """Greedy variance-reduction CART on the rows listed in ``samples``.

    Returns (feature, threshold, left, right, value, cover, n_nodes).
    """
    n = samples.size
    p = X.shape[1]
    cap = 2 * n + 1
    if max_depth < 30:
        cap = min(cap, (1 << (max_depth + 1)) - 1)
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    cover = np.zeros(cap, dtype=np.int64)

    idx = samples.copy()
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    top = 1
    n_nodes = 1
    all_cols = np.arange(p)

    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        depth = st_depth[top]
        m = hi - lo
        ysum = 0.0
        ymin = np.inf
        ymax = -np.inf
        for k in range(lo, hi):
            v = y[idx[k]]
            ysum += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        # a pure node stores its value exactly; a running mean could round
        value[node] = ymin if ymin == ymax else ysum / m
        cover[node] = m
        if depth >= max_depth or m < min_split or m < 2 * min_leaf or ymin == ymax:
            continue

        if n_try < p:
            cols = _choose_columns(rng_state, p, n_try)
        else:
            cols = all_cols

        best_score = -np.inf
        best_col = -1
        best_thr = 0.0
        vals = np.empty(m)
        ys = np.empty(m)
        for c in cols:
            for k in range(m):
                vals[k] = X[idx[lo + k], c]
            order = np.argsort(vals, kind="mergesort")
            for k in range(m):
                ys[k] = y[idx[lo + order[k]]]
            s_left = 0.0
            for i in range(m - 1):
                s_left += ys[i]
                a = vals[order[i]]
                b = vals[order[i + 1]]
                n_left = i + 1
                n_right = m - n_left
                if a == b or n_left < min_leaf or n_right < min_leaf:
                    continue
                s_right = ysum - s_left
                score = s_left * s_left / n_left + s_right * s_right / n_right
                if score > best_score:
                    best_score = score
                    best_col = c
                    thr = 0.5 * (a + b)
                    if thr >= b:
                        thr = a
                    best_thr = thr
        if best_col < 0:
            continue

        # partition idx[lo:hi] so rows with x <= thr come first (stable)
        buf = idx[lo:hi].copy()
        j = lo
        for k in range(m):
            if X[buf[k], best_col] <= best_thr:
                idx[j] = buf[k]
                j += 1
        mid = j
        for k in range(m):
            if X[buf[k], best_col] > best_thr:
                idx[j] = buf[k]
                j += 1

        feature[node] = best_col
        threshold[node] = best_thr
        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        left[node] = l_id
        right[node] = r_id
        # push right first so the left subtree is numbered first
        st_node[top] = r_id
        st_lo[top] = mid
        st_hi[top] = hi
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = l_id
        st_lo[top] = lo
        st_hi[top] = mid
        st_depth[top] = depth + 1
        top += 1

    return feature, threshold, left, right, value, cover, n_nodes


@njit(cache=True)
def predict_tree(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out


# ---------------------------------------------------------------------------
# path-dependent TreeSHAP (polynomial path-extension recursion)


@njit(cache=True)
def _extend(pf, pz, po, pw, d, zero_fraction, one_fraction, feat):
    pf[d] = feat
    pz[d] = zero_fraction
    po[d] = one_fraction
    pw[d] = 1.0 if d == 0 else 0.0
    for i in range(d - 1, -1, -1):
        pw[i + 1] += one_fraction * pw[i] * (i + 1) / (d + 1)
        pw[i] = zero_fraction * pw[i] * (d - i) / (d + 1)


@njit(cache=True)
def _unwind(pf, pz, po, pw, d, k):
    one = po[k]
    zero = pz[k]
    nxt = pw[d]
    for i in range(d - 1, -1, -1):
        if one != 0.0:
            tmp = pw[i]
            pw[i] = nxt * (d + 1) / ((i + 1) * one)
            nxt = tmp - pw[i] * zero * (d - i) / (d + 1)
        else:
            pw[i] = pw[i] * (d + 1) / (zero * (d - i))
    for i in range(k, d):
        pf[i] = pf[i + 1]
        pz[i] = pz[i + 1]
        po[i] = po[i + 1]


@njit(cache=True)
def _unwound_sum(pz, po, pw, d, k):
    one = po[k]
    zero = pz[k]
    nxt = pw[d]
    total = 0.0
    for i in range(d - 1, -1, -1):
        if one != 0.0:
            tmp = nxt * (d + 1) / ((i + 1) * one)
            total += tmp
            nxt = pw[i] - tmp * zero * (d - i) / (d + 1)
        else:
            total += pw[i] / zero / ((d - i) / (d + 1))
    return total


# no on-disk cache for the recursive kernel and its caller: numba's cache
# does not round-trip self-recursive functions reliably
@njit
def _recurse(node, lvl, feature, threshold, left, right, value, cover, x, phi,
             PF, PZ, PO, PW, d, parent_zero, parent_one, parent_feat):
    pf = PF[lvl]
    pz = PZ[lvl]
    po = PO[lvl]
    pw = PW[lvl]
    if lvl > 0:
        for i in range(d):
            pf[i] = PF[lvl - 1, i]
            pz[i] = PZ[lvl - 1, i]
            po[i] = PO[lvl - 1, i]
            pw[i] = PW[lvl - 1, i]
    _extend(pf, pz, po, pw, d, parent_zero, parent_one, parent_feat)

    f = feature[node]
    if f < 0:
        for i in range(1, d + 1):
            w = _unwound_sum(pz, po, pw, d, i)
            phi[pf[i]] += w * (po[i] - pz[i]) * value[node]
        return

    if x[f] <= threshold[node]:
        hot = left[node]
        cold = right[node]
    else:
        hot = right[node]
        cold = left[node]
    w_node = float(cover[node])
    hot_zero = cover[hot] / w_node
    cold_zero = cover[cold] / w_node
    inc_zero = 1.0
    inc_one = 1.0
    k = 1
    while k <= d:
        if pf[k] == f:
            break
        k += 1
    if k <= d:
        inc_zero = pz[k]
        inc_one = po[k]
        _unwind(pf, pz, po, pw, d, k)
        d -= 1
    _recurse(hot, lvl + 1, feature, threshold, left, right, value, cover, x, phi,
             PF, PZ, PO, PW, d + 1, hot_zero * inc_zero, inc_one, f)
    _recurse(cold, lvl + 1, feature, threshold, left, right, value, cover, x, phi,
             PF, PZ, PO, PW, d + 1, cold_zero * inc_zero, 0.0, f)


@njit(cache=True)
def _tree_depth(feature, left, right):
    n = feature.size
    depth = np.zeros(n, dtype=np.int64)
    best = 0
    for node in range(n):  # children always have larger ids than parents
        if feature[node] >= 0:
            depth[left[node]] = depth[node] + 1
            depth[right[node]] = depth[node] + 1
            if depth[node] + 1 > best:
                best = depth[node] + 1
    return best


@njit
def tree_shap_rows(feature, threshold, left, right, value, cover, X, n_cols):
    """Per-row SHAP values (rows x n_cols) of one tree."""
    D = _tree_depth(feature, left, right)
    size = D + 2
    PF = np.zeros((size + 1, size + 1), dtype=np.int64)
    PZ = np.zeros((size + 1, size + 1))
    PO = np.zeros((size + 1, size + 1))
    PW = np.zeros((size + 1, size + 1))
    out = np.zeros((X.shape[0], n_cols))
    phi = np.zeros(n_cols + 1)  # last slot absorbs the root's dummy feature
    for r in range(X.shape[0]):
        phi[:] = 0.0
        _recurse(0, 0, feature, threshold, left, right, value, cover, X[r], phi,
                 PF, PZ, PO, PW, 0, 1.0, 1.0, n_cols)
        out[r, :] = phi[:n_cols]
    return out
