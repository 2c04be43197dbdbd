"""Pure-Python/numpy implementations of the decoding kernels.

Used when the compiled ``duobot._kernels`` extension is unavailable (or when
``DUOBOT_PURE=1``). Results are bit-identical to the compiled versions: the
same arithmetic happens in the same order, and ties break the same way.
"""

from __future__ import annotations

import numpy as np

NEG_INF = -np.inf


def viterbi(logem, logtrans, loginit):
    """Best state path for emissions ``logem[T, S]``.

    Ties go to the lower state index, both for the predecessor at each step and
    for the final state.
    """
    logem = np.asarray(logem, dtype=np.float64)
    T, S = logem.shape
    if T == 0:
        raise ValueError("empty emission matrix")
    delta = loginit + logem[0]
    back = np.zeros((T, S), dtype=np.int64)
    for t in range(1, T):
        cand = delta[:, None] + logtrans
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(S)] + logem[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    score = float(delta[path[-1]])
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, score


def edit_distance(a, b):
    a = list(a)
    b = list(b)
    prev = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        cur = [i] + [0] * len(b)
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ai != b[j - 1]))
        prev = cur
    return prev[-1]


def approx_match(text, pattern):
    """Best edit distance of ``pattern`` against a substring of ``text`` ending at each position.

    Returns ``(dist, start)`` arrays of length ``len(text)``; ``start[j]`` is the
    first text index of the best window ending at ``j`` (``start[j] > j`` means
    the window is empty). Preference on ties: match/substitute, then skip a
    pattern symbol, then absorb a text symbol.
    """
    text = list(text)
    pattern = list(pattern)
    L, m = len(text), len(pattern)
    dist = np.empty(L, dtype=np.int64)
    start = np.empty(L, dtype=np.int64)
    # column over pattern prefixes for text position j
    prev_d = list(range(m + 1))
    prev_s = [0] * (m + 1)
    for j in range(1, L + 1):
        cur_d = [0] * (m + 1)
        cur_s = [j] * (m + 1)
        tj = text[j - 1]
        for i in range(1, m + 1):
            diag = prev_d[i - 1] + (pattern[i - 1] != tj)
            up = cur_d[i - 1] + 1
            left = prev_d[i] + 1
            if diag <= up and diag <= left:
                cur_d[i], cur_s[i] = diag, prev_s[i - 1]
            elif up <= left:
                cur_d[i], cur_s[i] = up, cur_s[i - 1]
            else:
                cur_d[i], cur_s[i] = left, prev_s[i]
        dist[j - 1] = cur_d[m]
        start[j - 1] = cur_s[m]
        prev_d, prev_s = cur_d, cur_s
    return dist, start


def chain_scores(logem, log_stay, log_move, free_start):
    """Left-to-right chain ending in its last state at each frame.

    ``logem[T, K]`` holds per-frame emission scores of each chain state.
    With ``free_start`` the chain may be entered (in state 0) at any frame,
    otherwise only at frame 0. Returns ``(score[T], start[T])``; a frame that
    cannot be reached gets ``-inf`` and start ``-1``. On ties a path that
    stays beats one that advances, and a running path beats a fresh entry.
    """
    logem = np.asarray(logem, dtype=np.float64)
    T, K = logem.shape
    score = np.full(T, NEG_INF)
    start = np.full(T, -1, dtype=np.int64)
    d = [NEG_INF] * K
    st = [-1] * K
    for t in range(T):
        nd = [NEG_INF] * K
        ns = [-1] * K
        for k in range(K - 1, -1, -1):
            best = d[k] + log_stay[k]
            bs = st[k]
            if k > 0:
                mv = d[k - 1] + log_move[k - 1]
                if mv > best:
                    best, bs = mv, st[k - 1]
            elif free_start or t == 0:
                if 0.0 > best or bs < 0:
                    best, bs = 0.0, t
            if bs >= 0:
                nd[k] = best + logem[t, k]
                ns[k] = bs
        d, st = nd, ns
        score[t] = d[K - 1]
        start[t] = st[K - 1]
    return score, start


def loop_scores(logem, log_stay, log_switch, loginit):
    """Ergodic loop with uniform switching: best score at each frame from frame 0."""
    logem = np.asarray(logem, dtype=np.float64)
    T, N = logem.shape
    out = np.empty(T)
    d = loginit + logem[0]
    out[0] = d.max()
    for t in range(1, T):
        order = np.argsort(-d, kind="stable")
        top1 = d[order[0]]
        top2 = d[order[1]] if N > 1 else NEG_INF
        others = np.full(N, top1)
        others[order[0]] = top2
        d = np.maximum(d + log_stay, others + log_switch) + logem[t]
        out[t] = d.max()
    return out


# --------------------------------------------------------------------------
# lexicon search with a trigram language model


def lexicon_search(logem, offsets, phone, stay, adv, transparent, penalty,
                   lm, lm_weight, beam_logp, max_tokens):
    """Token-passing Viterbi beam search over a word network.

    Word ``w`` owns substates ``offsets[w]:offsets[w+1]``; ``phone``, ``stay``
    and ``adv`` are per-substate arrays (``adv`` of a word's last substate is
    the exit score). ``lm[a, b, w]`` is the trigram log-probability of ``w``
    after history ``(a, b)``; index ``V`` is the sentence start. Transparent
    words (silence, noise) skip the LM and leave the history untouched.

    A token is keyed by ``(a, b, c)``: current word ``c`` and the history it
    was entered with. For non-transparent ``c`` only ``b`` matters for the
    future, so ``a`` is stored as ``-1`` and such tokens recombine.

    Returns ``(words, starts, ends, score)`` for the best hypothesis.
    """
    logem = np.asarray(logem, dtype=np.float64)
    T = logem.shape[0]
    V = len(offsets) - 1
    BOS = V
    nsub = [int(offsets[w + 1] - offsets[w]) for w in range(V)]
    records: list[tuple[int, int, int]] = []

    # token table: key -> [scores(list), links(list)]
    tokens: dict = {}
    for c in range(V):
        if transparent[c]:
            key, lms = (BOS, BOS, c), 0.0
        else:
            key, lms = (-1, BOS, c), lm_weight * lm[BOS, BOS, c]
        s = lms + penalty[c] + logem[0, phone[offsets[c]]]
        sc = [NEG_INF] * nsub[c]
        lk = [-1] * nsub[c]
        sc[0] = s
        tokens[key] = [sc, lk]
    tokens = _prune(tokens, beam_logp, max_tokens)

    for t in range(1, T):
        em = logem[t]
        new: dict = {}
        best_prop = NEG_INF
        for key, (sc, lk) in tokens.items():
            c = key[2]
            off = offsets[c]
            n = nsub[c]
            nsc = [NEG_INF] * n
            nlk = [-1] * n
            for k in range(n):
                g = off + k
                v = sc[k] + stay[g]
                l = lk[k]
                if k > 0:
                    mv = sc[k - 1] + adv[g - 1]
                    if mv > v:
                        v, l = mv, lk[k - 1]
                if v > NEG_INF:
                    v = v + em[phone[g]]
                    nsc[k] = v
                    nlk[k] = l
                    if v > best_prop:
                        best_prop = v
            new[key] = [nsc, nlk]
        floor = best_prop - beam_logp
        for key, (sc, lk) in tokens.items():
            a, b, c = key
            last = nsub[c] - 1
            if sc[last] == NEG_INF:
                continue
            ex = sc[last] + adv[offsets[c] + last]
            rec = len(records)
            records.append((c, t - 1, lk[last]))
            if transparent[c]:
                ha, hb = a, b
            else:
                ha, hb = b, c
            for w in range(V):
                if transparent[w]:
                    nkey = (ha, hb, w)
                    s = ex + 0.0
                else:
                    nkey = (-1, hb, w)
                    s = ex + lm_weight * lm[ha, hb, w]
                s = s + penalty[w] + em[phone[offsets[w]]]
                if s < floor or s == NEG_INF:
                    continue
                tok = new.get(nkey)
                if tok is None:
                    tok = [[NEG_INF] * nsub[w], [-1] * nsub[w]]
                    new[nkey] = tok
                if s > tok[0][0]:
                    tok[0][0] = s
                    tok[1][0] = rec
        tokens = _prune(new, beam_logp, max_tokens)

    # pick the final token, preferring completed words
    best, best_key, best_k = NEG_INF, None, -1
    for key, (sc, lk) in tokens.items():
        last = nsub[key[2]] - 1
        if sc[last] > best:
            best, best_key, best_k = sc[last], key, last
    if best_key is None:
        for key, (sc, lk) in tokens.items():
            for k in range(len(sc)):
                if sc[k] > best:
                    best, best_key, best_k = sc[k], key, k
    if best_key is None:
        return [], [], [], NEG_INF
    words = [best_key[2]]
    ends = [T - 1]
    link = tokens[best_key][1][best_k]
    while link >= 0:
        c, end, prev = records[link]
        words.append(c)
        ends.append(end)
        link = prev
    words.reverse()
    ends.reverse()
    starts = [0] + [e + 1 for e in ends[:-1]]
    return words, starts, ends, float(best)


def _prune(tokens: dict, beam_logp: float, max_tokens: int) -> dict:
    best = NEG_INF
    for sc, _ in tokens.values():
        for v in sc:
            if v > best:
                best = v
    floor = best - beam_logp
    kept = []
    for key, (sc, lk) in tokens.items():
        tbest = NEG_INF
        for k in range(len(sc)):
            if sc[k] < floor:
                sc[k] = NEG_INF
                lk[k] = -1
            elif sc[k] > tbest:
                tbest = sc[k]
        if tbest > NEG_INF:
            kept.append((key, tbest))
    if len(kept) > max_tokens:
        ranked = sorted(range(len(kept)), key=lambda i: (-kept[i][1], i))[:max_tokens]
        keep = set(ranked)
        kept = [kv for i, kv in enumerate(kept) if i in keep]
    return {key: tokens[key] for key, _ in kept}
