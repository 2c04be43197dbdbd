# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled decoding kernels; mirror of duobot._kernels_py."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

ctypedef cnp.float64_t f8
ctypedef cnp.int64_t i8

cdef double NEG_INF = -INFINITY


def viterbi(logem, logtrans, loginit):
    cdef const f8[:, :] em = np.ascontiguousarray(logem, dtype=np.float64)
    cdef const f8[:, :] A = np.ascontiguousarray(logtrans, dtype=np.float64)
    cdef const f8[:] pi = np.ascontiguousarray(loginit, dtype=np.float64)
    cdef Py_ssize_t T = em.shape[0], S = em.shape[1]
    if T == 0:
        raise ValueError("empty emission matrix")
    back_arr = np.zeros((T, S), dtype=np.int64)
    cdef i8[:, :] back = back_arr
    cdef f8[:] delta = np.empty(S)
    cdef f8[:] nd = np.empty(S)
    cdef Py_ssize_t t, i, j, bi
    cdef double bv, v
    for j in range(S):
        delta[j] = pi[j] + em[0, j]
    for t in range(1, T):
        for j in range(S):
            bi = 0
            bv = delta[0] + A[0, j]
            for i in range(1, S):
                v = delta[i] + A[i, j]
                if v > bv:
                    bv = v
                    bi = i
            back[t, j] = bi
            nd[j] = bv + em[t, j]
        delta, nd = nd, delta
    path_arr = np.empty(T, dtype=np.int64)
    cdef i8[:] path = path_arr
    bi = 0
    for j in range(1, S):
        if delta[j] > delta[bi]:
            bi = j
    path[T - 1] = bi
    score = float(delta[bi])
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path_arr, score


def edit_distance(a, b):
    cdef i8[:] x = np.asarray(list(a) if not isinstance(a, np.ndarray) else a, dtype=np.int64).reshape(-1)
    cdef i8[:] y = np.asarray(list(b) if not isinstance(b, np.ndarray) else b, dtype=np.int64).reshape(-1)
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0], i, j
    cdef i8[:] prev = np.arange(m + 1, dtype=np.int64)
    cdef i8[:] cur = np.empty(m + 1, dtype=np.int64)
    cdef i8 v, w
    for i in range(1, n + 1):
        cur[0] = i
        for j in range(1, m + 1):
            v = prev[j] + 1
            w = cur[j - 1] + 1
            if w < v:
                v = w
            w = prev[j - 1] + (x[i - 1] != y[j - 1])
            if w < v:
                v = w
            cur[j] = v
        prev, cur = cur, prev
    return int(prev[m])


def approx_match(text, pattern):
    cdef i8[:] tx = np.asarray(text, dtype=np.int64).reshape(-1)
    cdef i8[:] pt = np.asarray(pattern, dtype=np.int64).reshape(-1)
    cdef Py_ssize_t L = tx.shape[0], m = pt.shape[0], i, j
    dist_arr = np.empty(L, dtype=np.int64)
    start_arr = np.empty(L, dtype=np.int64)
    cdef i8[:] dist = dist_arr
    cdef i8[:] start = start_arr
    cdef i8[:] pd = np.arange(m + 1, dtype=np.int64)
    cdef i8[:] ps = np.zeros(m + 1, dtype=np.int64)
    cdef i8[:] cd = np.empty(m + 1, dtype=np.int64)
    cdef i8[:] cs = np.empty(m + 1, dtype=np.int64)
    cdef i8[:] tmp
    cdef i8 diag, up, left, tj
    for j in range(1, L + 1):
        cd[0] = 0
        cs[0] = j
        tj = tx[j - 1]
        for i in range(1, m + 1):
            diag = pd[i - 1] + (pt[i - 1] != tj)
            up = cd[i - 1] + 1
            left = pd[i] + 1
            if diag <= up and diag <= left:
                cd[i] = diag
                cs[i] = ps[i - 1]
            elif up <= left:
                cd[i] = up
                cs[i] = cs[i - 1]
            else:
                cd[i] = left
                cs[i] = ps[i]
        dist[j - 1] = cd[m]
        start[j - 1] = cs[m]
        tmp = pd; pd = cd; cd = tmp
        tmp = ps; ps = cs; cs = tmp
    return dist_arr, start_arr


def chain_scores(logem, log_stay, log_move, bint free_start):
    cdef const f8[:, :] em = np.ascontiguousarray(logem, dtype=np.float64)
    cdef const f8[:] ls = np.ascontiguousarray(log_stay, dtype=np.float64)
    cdef const f8[:] lm = np.ascontiguousarray(log_move, dtype=np.float64)
    cdef Py_ssize_t T = em.shape[0], K = em.shape[1], t, k
    score_arr = np.full(T, NEG_INF)
    start_arr = np.full(T, -1, dtype=np.int64)
    cdef f8[:] score = score_arr
    cdef i8[:] start = start_arr
    cdef f8[:] d = np.full(K, NEG_INF)
    cdef i8[:] st = np.full(K, -1, dtype=np.int64)
    cdef f8[:] nd = np.empty(K)
    cdef i8[:] ns = np.empty(K, dtype=np.int64)
    cdef f8[:] tf
    cdef i8[:] ti
    cdef double best, mv
    cdef i8 bs
    for t in range(T):
        for k in range(K - 1, -1, -1):
            best = d[k] + ls[k]
            bs = st[k]
            if k > 0:
                mv = d[k - 1] + lm[k - 1]
                if mv > best:
                    best = mv
                    bs = st[k - 1]
            elif free_start or t == 0:
                if 0.0 > best or bs < 0:
                    best = 0.0
                    bs = t
            if bs >= 0:
                nd[k] = best + em[t, k]
                ns[k] = bs
            else:
                nd[k] = NEG_INF
                ns[k] = -1
        tf = d; d = nd; nd = tf
        ti = st; st = ns; ns = ti
        score[t] = d[K - 1]
        start[t] = st[K - 1]
    return score_arr, start_arr


def loop_scores(logem, double log_stay, double log_switch, loginit):
    cdef const f8[:, :] em = np.ascontiguousarray(logem, dtype=np.float64)
    cdef const f8[:] pi = np.ascontiguousarray(loginit, dtype=np.float64)
    cdef Py_ssize_t T = em.shape[0], N = em.shape[1], t, j, i1
    out_arr = np.empty(T)
    cdef f8[:] out = out_arr
    cdef f8[:] d = np.empty(N)
    cdef double top1, top2, m, a, b
    for j in range(N):
        d[j] = pi[j] + em[0, j]
    m = d[0]
    for j in range(1, N):
        if d[j] > m:
            m = d[j]
    out[0] = m
    for t in range(1, T):
        i1 = 0
        for j in range(1, N):
            if d[j] > d[i1]:
                i1 = j
        top1 = d[i1]
        top2 = NEG_INF
        for j in range(N):
            if j != i1 and d[j] > top2:
                top2 = d[j]
        m = NEG_INF
        for j in range(N):
            a = d[j] + log_stay
            b = (top2 if j == i1 else top1) + log_switch
            if b > a:
                a = b
            d[j] = a + em[t, j]
            if d[j] > m:
                m = d[j]
        out[t] = m
    return out_arr


# --------------------------------------------------------------------------
# lexicon search


cdef class _Table:
    """Token table: fixed-width score/link rows plus (a, b, c) keys."""
    cdef public object sc_arr, lk_arr
    cdef f8[:, :] sc
    cdef i8[:, :] lk
    cdef i8[:] ka, kb, kc
    cdef object ka_arr, kb_arr, kc_arr
    cdef public Py_ssize_t n, cap, width

    def __init__(self, Py_ssize_t cap, Py_ssize_t width):
        self.cap = cap
        self.width = width
        self.n = 0
        self._alloc(cap)

    cdef _alloc(self, Py_ssize_t cap):
        self.sc_arr = np.full((cap, self.width), NEG_INF)
        self.lk_arr = np.full((cap, self.width), -1, dtype=np.int64)
        self.ka_arr = np.empty(cap, dtype=np.int64)
        self.kb_arr = np.empty(cap, dtype=np.int64)
        self.kc_arr = np.empty(cap, dtype=np.int64)
        self.sc = self.sc_arr
        self.lk = self.lk_arr
        self.ka = self.ka_arr
        self.kb = self.kb_arr
        self.kc = self.kc_arr

    cdef Py_ssize_t add(self, i8 a, i8 b, i8 c):
        cdef Py_ssize_t k
        if self.n == self.cap:
            old_sc, old_lk = self.sc_arr, self.lk_arr
            old_a, old_b, old_c = self.ka_arr, self.kb_arr, self.kc_arr
            self.cap *= 2
            self._alloc(self.cap)
            self.sc_arr[:self.n] = old_sc
            self.lk_arr[:self.n] = old_lk
            self.ka_arr[:self.n] = old_a
            self.kb_arr[:self.n] = old_b
            self.kc_arr[:self.n] = old_c
        for k in range(self.width):
            self.sc[self.n, k] = NEG_INF
            self.lk[self.n, k] = -1
        self.ka[self.n] = a
        self.kb[self.n] = b
        self.kc[self.n] = c
        self.n += 1
        return self.n - 1


cdef inline Py_ssize_t _kidx(i8 a, i8 b, i8 c, Py_ssize_t V1, Py_ssize_t V):
    return ((a + 1) * V1 + b) * V + c


def lexicon_search(logem, offsets, phone, stay, adv, transparent, penalty,
                   lm, double lm_weight, double beam_logp, Py_ssize_t max_tokens):
    cdef const f8[:, :] em = np.ascontiguousarray(logem, dtype=np.float64)
    cdef const i8[:] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef const i8[:] ph = np.ascontiguousarray(phone, dtype=np.int64)
    cdef const f8[:] sty = np.ascontiguousarray(stay, dtype=np.float64)
    cdef const f8[:] adv_ = np.ascontiguousarray(adv, dtype=np.float64)
    cdef const cnp.uint8_t[:] tr = np.ascontiguousarray(transparent, dtype=np.uint8)
    cdef const f8[:] pen = np.ascontiguousarray(penalty, dtype=np.float64)
    cdef const f8[:, :, :] LM = np.ascontiguousarray(lm, dtype=np.float64)
    cdef Py_ssize_t T = em.shape[0], V = off.shape[0] - 1, V1 = V + 1
    cdef i8 BOS = V
    cdef Py_ssize_t maxsub = 0, w, c, k, g, n, t, i, slot, nslot, last
    cdef i8 a, b, ha, hb, l, rec
    cdef double v, mv, s, ex, best_prop, floor, lms
    for w in range(V):
        if off[w + 1] - off[w] > maxsub:
            maxsub = off[w + 1] - off[w]
    keymap_arr = np.zeros((V + 2) * V1 * V, dtype=np.int64)
    cdef i8[:] keymap = keymap_arr
    rec_word, rec_end, rec_prev = [], [], []

    cdef _Table tok = _Table(64, maxsub)
    cdef _Table new
    for c in range(V):
        if tr[c]:
            slot = tok.add(BOS, BOS, c)
            lms = 0.0
        else:
            slot = tok.add(-1, BOS, c)
            lms = lm_weight * LM[BOS, BOS, c]
        tok.sc[slot, 0] = lms + pen[c] + em[0, ph[off[c]]]
    tok = _prune(tok, beam_logp, max_tokens)

    for t in range(1, T):
        new = _Table(tok.n + 64, maxsub)
        best_prop = NEG_INF
        for i in range(tok.n):
            c = tok.kc[i]
            slot = new.add(tok.ka[i], tok.kb[i], c)
            keymap[_kidx(tok.ka[i], tok.kb[i], c, V1, V)] = slot + 1
            n = off[c + 1] - off[c]
            for k in range(n):
                g = off[c] + k
                v = tok.sc[i, k] + sty[g]
                l = tok.lk[i, k]
                if k > 0:
                    mv = tok.sc[i, k - 1] + adv_[g - 1]
                    if mv > v:
                        v = mv
                        l = tok.lk[i, k - 1]
                if v > NEG_INF:
                    v = v + em[t, ph[g]]
                    new.sc[slot, k] = v
                    new.lk[slot, k] = l
                    if v > best_prop:
                        best_prop = v
        floor = best_prop - beam_logp
        for i in range(tok.n):
            a = tok.ka[i]
            b = tok.kb[i]
            c = tok.kc[i]
            last = off[c + 1] - off[c] - 1
            if tok.sc[i, last] == NEG_INF:
                continue
            ex = tok.sc[i, last] + adv_[off[c] + last]
            rec = len(rec_word)
            rec_word.append(c)
            rec_end.append(t - 1)
            rec_prev.append(tok.lk[i, last])
            if tr[c]:
                ha = a
                hb = b
            else:
                ha = b
                hb = c
            for w in range(V):
                if tr[w]:
                    a = ha
                    s = ex + 0.0
                else:
                    a = -1
                    s = ex + lm_weight * LM[ha, hb, w]
                s = s + pen[w] + em[t, ph[off[w]]]
                if s < floor or s == NEG_INF:
                    continue
                g = _kidx(a, hb, w, V1, V)
                if keymap[g] == 0:
                    slot = new.add(a, hb, w)
                    keymap[g] = slot + 1
                else:
                    slot = keymap[g] - 1
                if s > new.sc[slot, 0]:
                    new.sc[slot, 0] = s
                    new.lk[slot, 0] = rec
        for i in range(new.n):
            keymap[_kidx(new.ka[i], new.kb[i], new.kc[i], V1, V)] = 0
        tok = _prune(new, beam_logp, max_tokens)

    cdef double best = NEG_INF
    cdef Py_ssize_t best_i = -1, best_k = -1
    for i in range(tok.n):
        last = off[tok.kc[i] + 1] - off[tok.kc[i]] - 1
        if tok.sc[i, last] > best:
            best = tok.sc[i, last]
            best_i = i
            best_k = last
    if best_i < 0:
        for i in range(tok.n):
            n = off[tok.kc[i] + 1] - off[tok.kc[i]]
            for k in range(n):
                if tok.sc[i, k] > best:
                    best = tok.sc[i, k]
                    best_i = i
                    best_k = k
    if best_i < 0:
        return [], [], [], float(NEG_INF)
    words = [int(tok.kc[best_i])]
    ends = [T - 1]
    link = int(tok.lk[best_i, best_k])
    while link >= 0:
        words.append(rec_word[link])
        ends.append(rec_end[link])
        link = rec_prev[link]
    words.reverse()
    ends.reverse()
    starts = [0] + [e + 1 for e in ends[:-1]]
    return words, starts, ends, float(best)


cdef _Table _prune(_Table tok, double beam_logp, Py_ssize_t max_tokens):
    cdef double best = NEG_INF, floor, tb
    cdef Py_ssize_t i, k, nk = 0
    for i in range(tok.n):
        for k in range(tok.width):
            if tok.sc[i, k] > best:
                best = tok.sc[i, k]
    floor = best - beam_logp
    tbest_arr = np.full(tok.n, NEG_INF)
    cdef f8[:] tbest = tbest_arr
    for i in range(tok.n):
        tb = NEG_INF
        for k in range(tok.width):
            if tok.sc[i, k] < floor:
                tok.sc[i, k] = NEG_INF
                tok.lk[i, k] = -1
            elif tok.sc[i, k] > tb:
                tb = tok.sc[i, k]
        tbest[i] = tb
        if tb > NEG_INF:
            nk += 1
    keep_arr = tbest_arr > NEG_INF
    if nk > max_tokens:
        alive = np.flatnonzero(keep_arr)
        order = sorted(range(len(alive)), key=lambda j: (-tbest_arr[alive[j]], j))[:max_tokens]
        keep_arr[:] = False
        keep_arr[alive[order]] = True
    cdef cnp.uint8_t[:] keep = keep_arr.view(np.uint8)
    cdef _Table out = _Table(max(nk, 1), tok.width)
    cdef Py_ssize_t slot
    for i in range(tok.n):
        if keep[i]:
            slot = out.add(tok.ka[i], tok.kb[i], tok.kc[i])
            for k in range(tok.width):
                out.sc[slot, k] = tok.sc[i, k]
                out.lk[slot, k] = tok.lk[i, k]
    return out
