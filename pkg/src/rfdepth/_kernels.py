"""Compiled split search, tree growth and routing.

Cells are contiguous ranges of a work array of sample indices, partitioned
in place when a cell is cut. Responses are float64 for both tasks; for
classification they hold class indices and ``n_classes > 0``.
"""

import numba as nb
import numpy as np

# Candidate gains are screened in float64 and the survivors re-evaluated in
# double-double arithmetic (about 32 significant digits). A candidate replaces
# the incumbent only if its double-double gain is larger by more than
# TIE_TOL * parent impurity, so exact ties keep the lowest (feature,
# threshold) while gains that differ in the last float bits are still ranked.
SCREEN_TOL = 1e-8
TIE_TOL = 1e-26

FIFO = 0
BEST_FIRST = 1

_jit = nb.njit(cache=True, nogil=True)


@_jit
def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@_jit
def _quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


@_jit
def _split(a):
    t = 134217729.0 * a
    hi = t - (t - a)
    return hi, a - hi


@_jit
def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


@_jit
def _dd_add(ah, al, bh, bl):
    s, e = _two_sum(ah, bh)
    t, f = _two_sum(al, bl)
    e += t
    s, e = _quick_two_sum(s, e)
    e += f
    return _quick_two_sum(s, e)


@_jit
def _dd_sq_div(h, l, n):
    # (h + l)^2 / n for a positive integer n
    p, e = _two_prod(h, h)
    e += 2.0 * h * l
    p, e = _quick_two_sum(p, e)
    q1 = p / n
    r1, r2 = _two_prod(q1, n)
    s, f = _two_sum(p, -r1)
    f = f - r2 + e
    return _quick_two_sum(q1, (s + f) / n)


@_jit
def _dd_div(a, n):
    # a / n for exactly representable a and positive integer n
    q1 = a / n
    r1, r2 = _two_prod(q1, n)
    s, f = _two_sum(a, -r1)
    return _quick_two_sum(q1, (s + f - r2) / n)


@_jit
def _all_rows_equal(X, samples, start, end):
    first = samples[start]
    for j in range(X.shape[1]):
        v = X[first, j]
        for i in range(start + 1, end):
            if X[samples[i], j] != v:
                return False
    return True


@_jit
def _response_constant(y, samples, start, end):
    v = y[samples[start]]
    for i in range(start + 1, end):
        if y[samples[i]] != v:
            return False
    return True


@_jit
def _search(X, y, n_classes, samples, start, end, feats, n_feats,
            xbuf, cnt_all, cnt_left):
    """Best (feature, threshold, gain) over ``feats[:n_feats]``.

    Returns feature -1 when no split has positive gain. Features are scanned
    in ascending order and thresholds in ascending order; only a strict
    improvement replaces the incumbent, so ties go to the lowest pair.
    """
    m = end - start
    best_f = -1
    best_thr = 0.0
    best_h = 0.0
    best_l = 0.0
    mean = 0.0
    total = 0.0
    tot_h = 0.0
    tot_l = 0.0
    base_h = 0.0
    base_l = 0.0
    sq = 0.0
    if m < 2:
        return best_f, best_thr, 0.0
    if n_classes == 0:
        for i in range(start, end):
            mean += y[samples[i]]
        mean /= m
        parent = 0.0
        for i in range(start, end):
            d = y[samples[i]] - mean
            total += d
            parent += d * d
            dh, dl = _two_sum(y[samples[i]], -mean)
            tot_h, tot_l = _dd_add(tot_h, tot_l, dh, dl)
        base = total * total / m
        base_h, base_l = _dd_sq_div(tot_h, tot_l, float(m))
    else:
        cnt_all[:] = 0.0
        for i in range(start, end):
            cnt_all[int(y[samples[i]])] += 1.0
        for k in range(n_classes):
            sq += cnt_all[k] * cnt_all[k]
        parent = m - sq / m
        base = sq / m
        base_h, base_l = _dd_div(sq, float(m))
    if parent <= 0.0:
        return best_f, best_thr, 0.0
    screen = SCREEN_TOL * parent
    tie = TIE_TOL * parent
    for fi in range(n_feats):
        f = feats[fi]
        for i in range(m):
            xbuf[i] = X[samples[start + i], f]
        order = np.argsort(xbuf[:m], kind="mergesort")
        if xbuf[order[0]] == xbuf[order[m - 1]]:
            continue
        if n_classes == 0:
            sl = 0.0
            sl_h = 0.0
            sl_l = 0.0
            for r in range(m - 1):
                yi = y[samples[start + order[r]]]
                sl += yi - mean
                dh, dl = _two_sum(yi, -mean)
                sl_h, sl_l = _dd_add(sl_h, sl_l, dh, dl)
                a = xbuf[order[r]]
                b = xbuf[order[r + 1]]
                if a < b:
                    nl = r + 1
                    sr = total - sl
                    gain = sl * sl / nl + sr * sr / (m - nl) - base
                    if gain < best_h - screen:
                        continue
                    sr_h, sr_l = _dd_add(tot_h, tot_l, -sl_h, -sl_l)
                    gh, gl = _dd_sq_div(sl_h, sl_l, float(nl))
                    qh, ql = _dd_sq_div(sr_h, sr_l, float(m - nl))
                    gh, gl = _dd_add(gh, gl, qh, ql)
                    gh, gl = _dd_add(gh, gl, -base_h, -base_l)
                    if (gh - best_h) + (gl - best_l) > tie:
                        thr = 0.5 * (a + b)
                        if thr >= b:
                            thr = a
                        best_f, best_thr, best_h, best_l = f, thr, gh, gl
        else:
            cnt_left[:] = 0.0
            sq_l = 0.0
            sq_r = sq
            for r in range(m - 1):
                k = int(y[samples[start + order[r]]])
                sq_l += 2.0 * cnt_left[k] + 1.0
                sq_r -= 2.0 * (cnt_all[k] - cnt_left[k]) - 1.0
                cnt_left[k] += 1.0
                a = xbuf[order[r]]
                b = xbuf[order[r + 1]]
                if a < b:
                    nl = r + 1
                    gain = sq_l / nl + sq_r / (m - nl) - base
                    if gain < best_h - screen:
                        continue
                    gh, gl = _dd_div(sq_l, float(nl))
                    qh, ql = _dd_div(sq_r, float(m - nl))
                    gh, gl = _dd_add(gh, gl, qh, ql)
                    gh, gl = _dd_add(gh, gl, -base_h, -base_l)
                    if (gh - best_h) + (gl - best_l) > tie:
                        thr = 0.5 * (a + b)
                        if thr >= b:
                            thr = a
                        best_f, best_thr, best_h, best_l = f, thr, gh, gl
    return best_f, best_thr, best_h + best_l


@_jit
def best_split_cell(X, y, n_classes, samples, feats):
    """Best split of the cell made of all ``samples`` over ``feats``."""
    m = samples.shape[0]
    xbuf = np.empty(m)
    cnt_all = np.zeros(max(n_classes, 1))
    cnt_left = np.zeros(max(n_classes, 1))
    fs = np.sort(feats)
    return _search(X, y, n_classes, samples, 0, m, fs, fs.shape[0],
                   xbuf, cnt_all, cnt_left)


@_jit
def _draw(rng, perm, p, mtry, out):
    # partial Fisher-Yates over a persistent permutation buffer
    for i in range(mtry):
        j = i + rng.integers(0, p - i)
        t = perm[i]
        perm[i] = perm[j]
        perm[j] = t
    out[:mtry] = np.sort(perm[:mtry])


@_jit
def _choose_split(X, y, n_classes, samples, start, end, mtry, rng, perm,
                  feats, all_feats, xbuf, cnt_all, cnt_left):
    p = X.shape[1]
    if mtry >= p:
        return _search(X, y, n_classes, samples, start, end, all_feats, p,
                       xbuf, cnt_all, cnt_left)
    _draw(rng, perm, p, mtry, feats)
    res = _search(X, y, n_classes, samples, start, end, feats, mtry,
                  xbuf, cnt_all, cnt_left)
    if res[0] >= 0:
        return res
    full = _search(X, y, n_classes, samples, start, end, all_feats, p,
                   xbuf, cnt_all, cnt_left)
    if full[0] < 0:
        return full
    for _ in range((p + mtry - 1) // mtry):
        _draw(rng, perm, p, mtry, feats)
        res = _search(X, y, n_classes, samples, start, end, feats, mtry,
                      xbuf, cnt_all, cnt_left)
        if res[0] >= 0:
            return res
    return res


@_jit
def _partition(X, samples, start, end, f, thr, tmp):
    nl = 0
    nr = 0
    for i in range(start, end):
        s = samples[i]
        if X[s, f] <= thr:
            samples[start + nl] = s
            nl += 1
        else:
            tmp[nr] = s
            nr += 1
    for i in range(nr):
        samples[start + nl + i] = tmp[i]
    return start + nl


@_jit
def _fill_node(node, y, n_classes, samples, start, end, value, counts,
               n_node_samples):
    m = end - start
    n_node_samples[node] = m
    if n_classes == 0:
        s = 0.0
        for i in range(start, end):
            s += y[samples[i]]
        value[node] = s / m
    else:
        for i in range(start, end):
            counts[node, int(y[samples[i]])] += 1.0
        best = 0
        for k in range(1, n_classes):
            if counts[node, k] > counts[node, best]:
                best = k
        value[node] = best


@_jit
def grow(X, y, n_classes, draw, mtry, nodesize, max_splits, order, rng):
    """Grow one tree on the rows listed in ``draw`` (duplicates allowed).

    ``max_splits < 0`` means unlimited. Returns node arrays sized to the
    number of nodes created.
    """
    n_draw = draw.shape[0]
    p = X.shape[1]
    cap = 2 * n_draw + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    counts = np.zeros((cap, max(n_classes, 1)))
    n_node_samples = np.zeros(cap, np.int64)
    start_of = np.zeros(cap, np.int64)
    end_of = np.zeros(cap, np.int64)
    # pending split per open node (best-first evaluates cells on creation)
    pend_f = np.full(cap, -1, np.int64)
    pend_thr = np.zeros(cap)
    pend_gain = np.zeros(cap)
    is_open = np.zeros(cap, np.bool_)

    samples = draw.copy()
    tmp = np.empty(n_draw, np.int64)
    xbuf = np.empty(n_draw)
    cnt_all = np.zeros(max(n_classes, 1))
    cnt_left = np.zeros(max(n_classes, 1))
    perm = np.arange(p)
    feats = np.empty(p, np.int64)
    all_feats = np.arange(p)

    queue = np.empty(cap, np.int64)
    head = 0
    tail = 0
    n_nodes = 1
    splits_left = max_splits
    start_of[0] = 0
    end_of[0] = n_draw
    _fill_node(0, y, n_classes, samples, 0, n_draw, value, counts,
               n_node_samples)

    if order == FIFO:
        queue[tail] = 0
        tail += 1
        while head < tail:
            node = queue[head]
            head += 1
            s0 = start_of[node]
            s1 = end_of[node]
            if s1 - s0 < nodesize or _all_rows_equal(X, samples, s0, s1):
                continue
            if _response_constant(y, samples, s0, s1) or splits_left == 0:
                continue
            f, thr, g = _choose_split(X, y, n_classes, samples, s0, s1, mtry,
                                      rng, perm, feats, all_feats, xbuf,
                                      cnt_all, cnt_left)
            if f < 0:
                continue
            mid = _partition(X, samples, s0, s1, f, thr, tmp)
            lc = n_nodes
            rc = n_nodes + 1
            n_nodes += 2
            feature[node] = f
            threshold[node] = thr
            left[node] = lc
            right[node] = rc
            start_of[lc] = s0
            end_of[lc] = mid
            start_of[rc] = mid
            end_of[rc] = s1
            _fill_node(lc, y, n_classes, samples, s0, mid, value, counts,
                       n_node_samples)
            _fill_node(rc, y, n_classes, samples, mid, s1, value, counts,
                       n_node_samples)
            queue[tail] = lc
            queue[tail + 1] = rc
            tail += 2
            if splits_left > 0:
                splits_left -= 1
    else:
        # best-first: evaluate a cell when it is created, cut the open cell
        # with the largest gain (ties: earliest created)
        n_open = 0
        to_eval = queue
        to_eval[0] = 0
        n_eval = 1
        while True:
            for e in range(n_eval):
                node = to_eval[e]
                s0 = start_of[node]
                s1 = end_of[node]
                if s1 - s0 < nodesize or _all_rows_equal(X, samples, s0, s1):
                    continue
                if _response_constant(y, samples, s0, s1):
                    continue
                f, thr, g = _choose_split(X, y, n_classes, samples, s0, s1,
                                          mtry, rng, perm, feats, all_feats,
                                          xbuf, cnt_all, cnt_left)
                if f < 0:
                    continue
                pend_f[node] = f
                pend_thr[node] = thr
                pend_gain[node] = g
                is_open[node] = True
                n_open += 1
            if n_open == 0 or splits_left == 0:
                break
            node = -1
            for c in range(n_nodes):
                if is_open[c] and (node < 0 or pend_gain[c] > pend_gain[node]):
                    node = c
            is_open[node] = False
            n_open -= 1
            s0 = start_of[node]
            s1 = end_of[node]
            f = pend_f[node]
            thr = pend_thr[node]
            mid = _partition(X, samples, s0, s1, f, thr, tmp)
            lc = n_nodes
            rc = n_nodes + 1
            n_nodes += 2
            feature[node] = f
            threshold[node] = thr
            left[node] = lc
            right[node] = rc
            start_of[lc] = s0
            end_of[lc] = mid
            start_of[rc] = mid
            end_of[rc] = s1
            _fill_node(lc, y, n_classes, samples, s0, mid, value, counts,
                       n_node_samples)
            _fill_node(rc, y, n_classes, samples, mid, s1, value, counts,
                       n_node_samples)
            to_eval[0] = lc
            to_eval[1] = rc
            n_eval = 2
            if splits_left > 0:
                splits_left -= 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(),
            value[:n_nodes].copy(), counts[:n_nodes].copy(),
            n_node_samples[:n_nodes].copy())


@_jit
def apply(feature, threshold, left, right, X):
    """Leaf index reached by every row of ``X``."""
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
