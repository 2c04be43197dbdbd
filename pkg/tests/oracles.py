"""Brute-force reference implementations used as test oracles.

Each oracle follows the textbook definition directly (full path
enumeration or plain recursion) and shares no code with the package.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Sequence

import numpy as np


def edit_distance_naive(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance by the recursive definition (memoised on suffixes)."""
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def d(i: int, j: int) -> int:
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        return min(d(i + 1, j) + 1, d(i, j + 1) + 1, d(i + 1, j + 1) + (a[i] != b[j]))

    return d(0, 0)


def best_window_distance(text: Sequence, pattern: Sequence, end: int) -> int:
    """min over non-empty windows ``text[s:end+1]`` of the edit distance to ``pattern``,
    also allowing the empty window (distance ``len(pattern)``)."""
    best = len(pattern)
    for s in range(end + 1):
        best = min(best, edit_distance_naive(text[s:end + 1], pattern))
    return best


def all_paths(n_states: int, length: int) -> np.ndarray:
    """Every state sequence of the given length, one per row."""
    if length == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.product(range(n_states), repeat=length)), dtype=np.int64)


def viterbi_brute(logem: np.ndarray, logtrans: np.ndarray, loginit: np.ndarray) -> tuple[np.ndarray, float]:
    """Best path and score over all ``S**T`` paths."""
    T, S = logem.shape
    paths = all_paths(S, T)
    score = loginit[paths[:, 0]] + logem[0, paths[:, 0]]
    for t in range(1, T):
        score = score + logtrans[paths[:, t - 1], paths[:, t]] + logem[t, paths[:, t]]
    k = int(np.argmax(score))
    return paths[k], float(score[k])


def chain_paths(K: int, length: int) -> list[tuple[int, ...]]:
    """Left-to-right paths through K states that start in state 0 and end in state K-1."""
    out = []

    def rec(path: list[int]) -> None:
        if len(path) == length:
            if path[-1] == K - 1:
                out.append(tuple(path))
            return
        last = path[-1]
        rec(path + [last])
        if last + 1 < K:
            rec(path + [last + 1])

    if length >= 1:
        rec([0])
    return out


def chain_brute(em: np.ndarray, log_stay: Sequence[float], log_move: Sequence[float]) -> float:
    """Best score of a chain path over all frames of ``em`` (forced start at frame 0)."""
    T, K = em.shape
    best = -math.inf
    for p in chain_paths(K, T):
        s = em[0, p[0]]
        for t in range(1, T):
            s += (log_stay[p[t]] if p[t] == p[t - 1] else log_move[p[t - 1]]) + em[t, p[t]]
        best = max(best, s)
    return best


def loop_brute(em: np.ndarray, log_stay: float, log_switch: float, loginit: np.ndarray) -> float:
    """Best ergodic-loop path score over all frames of ``em``."""
    T, N = em.shape
    paths = all_paths(N, T)
    s = loginit[paths[:, 0]] + em[0, paths[:, 0]]
    for t in range(1, T):
        same = paths[:, t] == paths[:, t - 1]
        s = s + np.where(same, log_stay, log_switch) + em[t, paths[:, t]]
    return float(s.max())


def lexicon_brute(logem, offsets, phone, stay, adv, transparent, penalty, lm, lm_weight,
                  completed: bool = True):
    """Exhaustive search over every word/substate path.

    A path occupies one substate per frame. Inside a word it stays or moves
    to the next substate; from a word's last substate it may exit (paying
    the exit score) and enter the first substate of any word at the next
    frame. Entering a non-transparent word pays the trigram score of the
    true two-word history. The result must end in a word's last substate
    when any such path exists (with ``completed=False``, the best path
    ending anywhere). Returns ``(words, score)``.
    """
    T = logem.shape[0]
    V = len(offsets) - 1
    BOS = V
    best = [-math.inf, None]
    best_any = [-math.inf, None]

    def enter(w, ha, hb):
        if transparent[w]:
            return penalty[w], (ha, hb)
        return lm_weight * lm[ha, hb, w] + penalty[w], (hb, w)

    def rec(t, w, k, hist_after, words, score):
        last = offsets[w + 1] - offsets[w] - 1
        if t == T - 1:
            if k == last and score > best[0]:
                best[0], best[1] = score, list(words)
            if score > best_any[0]:
                best_any[0], best_any[1] = score, list(words)
            return
        g = offsets[w] + k
        em = logem[t + 1]
        if stay[g] > -math.inf:
            rec(t + 1, w, k, hist_after, words, score + stay[g] + em[phone[g]])
        if k < last:
            rec(t + 1, w, k + 1, hist_after, words, score + adv[g] + em[phone[g + 1]])
        else:
            ex = score + adv[g]
            ha, hb = hist_after
            for w2 in range(V):
                pen, h2 = enter(w2, ha, hb)
                rec(t + 1, w2, 0, h2, words + [w2], ex + pen + em[phone[offsets[w2]]])

    for w in range(V):
        pen, h = enter(w, BOS, BOS)
        rec(0, w, 0, h, [w], pen + logem[0, phone[offsets[w]]])
    if best[1] is None or not completed:
        return best_any[1], best_any[0]
    return best[1], best[0]
