"""The three keyword spotters.

Each spotter first turns a stream into scored *candidates* (a frame window
plus a score), then :func:`select` applies the threshold and debounces
the resulting decision times. Calibration
sweeps reuse the candidates, so a sweep point and a direct ``spot_*`` call
agree exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .. import kernels
from ..phonostream import NOI, SIL, AcousticStream, PhonemeAlphabet
from .models import (FILLER_TOKENS, KeywordHmm, PhonemeBigram, TrigramLm,
                     build_network)

LOG_FLOOR = 1e-4
DEBOUNCE_MS = 500
DECISION_DELAY_MS = 50


class Algorithm(str, Enum):
    PHONETIC = "PHONETIC"
    HMM = "HMM"
    LM = "LM"


@dataclass(frozen=True)
class Candidate:
    start_frame: int
    end_frame: int          # inclusive
    score: float


@dataclass(frozen=True)
class Detection:
    t_detect_ms: int
    score: float
    algorithm: Algorithm
    start_ms: int
    end_ms: int
    latency_ms: int | None = None


def _log_post(stream: AcousticStream) -> np.ndarray:
    return stream.log_posteriors(LOG_FLOOR)


def select(stream: AcousticStream, cands: Sequence[Candidate], threshold: float,
           algorithm: Algorithm, decision_delay_ms: int = DECISION_DELAY_MS,
           debounce_ms: int = DEBOUNCE_MS) -> list[Detection]:
    """Threshold, then keep a debounced set of decision times.

    Every passing candidate proposes the decision time "window end plus a
    fixed delay". Debouncing runs from the latest proposal backwards and
    keeps one whenever it lies at least ``debounce_ms`` before the last kept
    one, so a run of overlapping windows is decided when it closes. On
    sorted times this keeps the largest possible spaced subset, and since
    loosening the threshold only adds proposals the detection count never
    falls. Each detection reports the best candidate it absorbed (earliest
    on ties).
    """
    period = stream.frame_period_ms
    kept = sorted((c for c in cands if c.score >= threshold), key=lambda c: (c.end_frame, c.start_frame))
    times = [min((c.end_frame + 1) * period + decision_delay_ms, stream.duration_ms) for c in kept]
    chosen: list[int] = []
    for k in range(len(kept) - 1, -1, -1):
        if not chosen or times[chosen[-1]] - times[k] >= debounce_ms:
            chosen.append(k)
    chosen.reverse()
    kw_end = stream.keyword_end_ms
    out: list[Detection] = []
    lo = 0
    for k in chosen:
        best = kept[lo]
        for c in kept[lo + 1:k + 1]:
            if c.score > best.score:
                best = c
        lo = k + 1
        t = times[k]
        lat = t - kw_end if kw_end is not None else None
        out.append(Detection(t, best.score, algorithm, best.start_frame * period,
                             (kept[k].end_frame + 1) * period, lat))
    return out


# --------------------------------------------------------------------------
# phonetic search


def decode_phonemes(stream: AcousticStream, bigram: PhonemeBigram) -> list[str]:
    """Frame-level Viterbi phoneme labels (one per frame)."""
    if len(stream) == 0:
        raise ValueError("cannot decode an empty stream")
    path, _ = kernels.viterbi(_log_post(stream), bigram.trans, bigram.init)
    return stream.alphabet.decode(path)


def collapse(labels: Sequence[str], drop: Sequence[str] = (SIL, NOI)) -> list[tuple[str, int, int]]:
    """Run-length collapse to ``(phoneme, first_frame, last_frame)`` runs, dropping fillers."""
    runs = []
    k = 0
    while k < len(labels):
        j = k
        while j + 1 < len(labels) and labels[j + 1] == labels[k]:
            j += 1
        if labels[k] not in drop:
            runs.append((labels[k], k, j))
        k = j + 1
    return runs


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit costs."""
    return kernels.edit_distance(_as_codes(a, b)[0], _as_codes(a, b)[1])


def _as_codes(a: Sequence, b: Sequence) -> tuple[np.ndarray, np.ndarray]:
    table: dict = {}
    ca = np.array([table.setdefault(x, len(table)) for x in a], dtype=np.int64)
    cb = np.array([table.setdefault(x, len(table)) for x in b], dtype=np.int64)
    return ca, cb


def phonetic_candidates(stream: AcousticStream, keyword: Sequence[str],
                        bigram: PhonemeBigram) -> list[Candidate]:
    runs = collapse(decode_phonemes(stream, bigram))
    if not runs:
        return []
    alpha = stream.alphabet
    text = np.array([alpha.index(r[0]) for r in runs], dtype=np.int64)
    pat = alpha.encode(keyword)
    dist, start = kernels.approx_match(text, pat)
    out = []
    for j in range(len(runs)):
        s = int(start[j])
        if s > j:  # empty window
            continue
        out.append(Candidate(runs[s][1], runs[j][2], -float(dist[j])))
    return out


def spot_phonetic(stream: AcousticStream, keyword: Sequence[str], bigram: PhonemeBigram,
                  max_distance: int) -> list[Detection]:
    if max_distance < 0:
        raise ValueError("max_distance must be >= 0")
    cands = phonetic_candidates(stream, keyword, bigram)
    return select(stream, cands, -max_distance, Algorithm.PHONETIC)


# --------------------------------------------------------------------------
# keyword / filler HMM


@dataclass
class SegmentScores:
    keyword: np.ndarray     # keyword-chain log-likelihood of the segment ending at t
    start: np.ndarray       # first frame of that segment
    filler: np.ndarray      # best filler-loop log-likelihood over the same frames
    ratio: np.ndarray       # keyword - filler


def hmm_segment_scores(logem: np.ndarray, hmm: KeywordHmm) -> SegmentScores:
    """Keyword-vs-filler log-likelihood ratio for the best segment ending at each frame.

    The segment start comes from a free-start pass over filler-normalised
    scores (emissions relative to the frame's best phoneme, transitions
    relative to the composite network's filler stay and switch), which
    approximates the ratio and so does not favour short segments. With the
    default equal stay probabilities a keyword stay is neutral, so the
    segment reaches back to the first frame of the keyword's first phoneme.
    Both likelihoods are then computed exactly over that segment.
    """
    T, N = logem.shape
    kw = hmm.keyword_index
    K = len(kw)
    log_stay = math.log(hmm.keyword_stay)
    log_move = math.log(1.0 - hmm.keyword_stay)
    norm_em = logem[:, kw] - logem.max(axis=1, keepdims=True)
    f_stay, f_switch = hmm.composite_filler_transitions
    _, kstart = kernels.chain_scores(norm_em, np.full(K, log_stay - f_stay),
                                     np.full(K - 1, log_move - f_switch), True)
    init = np.full(N, -math.log(N))
    ls, lm = np.full(K, log_stay), np.full(K - 1, log_move)
    keyword = np.full(T, -math.inf)
    filler = np.full(T, -math.inf)
    last_t: dict[int, int] = {}
    for t in range(T):
        if kstart[t] >= 0:
            last_t[int(kstart[t])] = t
    for s, t_max in last_t.items():
        k_raw, _ = kernels.chain_scores(logem[s:t_max + 1, kw], ls, lm, False)
        f_raw = kernels.loop_scores(logem[s:t_max + 1], hmm.filler_log_stay, hmm.filler_log_switch, init)
        sel = np.flatnonzero(kstart[s:t_max + 1] == s)
        keyword[s + sel] = k_raw[sel]
        filler[s + sel] = f_raw[sel]
    with np.errstate(invalid="ignore"):
        ratio = np.where(np.isfinite(keyword), keyword - filler, -math.inf)
    return SegmentScores(keyword, kstart, filler, ratio)


def hmm_candidates(stream: AcousticStream, hmm: KeywordHmm) -> list[Candidate]:
    hmm.validate()
    seg = hmm_segment_scores(_log_post(stream), hmm)
    return [Candidate(int(seg.start[t]), t, float(seg.ratio[t]))
            for t in range(len(stream)) if np.isfinite(seg.ratio[t])]


def spot_hmm(stream: AcousticStream, hmm: KeywordHmm, ratio_threshold: float) -> list[Detection]:
    return select(stream, hmm_candidates(stream, hmm), ratio_threshold, Algorithm.HMM)


# --------------------------------------------------------------------------
# LM decoding


@dataclass
class LmDecoderConfig:
    lm_weight: float = 2.0
    word_penalty: float = -2.0
    filler_penalty: float = -1.0
    garbage_penalty: float = -4.0
    beam_logp: float = 25.0
    max_tokens: int = 32
    competitor_tokens: int = 64
    min_frames: int = 2
    phone_stay: float = 0.8


class LmDecoder:
    """Beam-searched trigram decoding plus keyword confidence scoring.

    The confidence of a keyword found in the 1-best is the per-frame gap
    between the keyword's forced alignment over its span and the best
    hypothesis over the same span that does not contain the keyword phrase
    (other words, silence, or a penalised free phoneme loop).
    """

    def __init__(self, lm: TrigramLm, alphabet: PhonemeAlphabet,
                 config: LmDecoderConfig | None = None):
        self.lm = lm
        self.alphabet = alphabet
        self.cfg = config or LmDecoderConfig()
        if self.cfg.max_tokens < 1:
            raise ValueError("beam width must be >= 1")
        cfg = self.cfg
        entries = [(w, lm.lexicon[w], False, cfg.word_penalty) for w in lm.vocab]
        entries += [(tok, ph, True, cfg.filler_penalty) for tok, ph in FILLER_TOKENS]
        self.net = build_network(entries, alphabet, cfg.min_frames, cfg.phone_stay)
        V = len(lm.vocab)
        # filler words are appended after the vocabulary; their LM rows are unused
        self.lm_array = _embed_lm(lm.dense(), V, len(FILLER_TOKENS))
        # competitor network: everything but the keyword phrase, plus garbage phones
        kw = lm.keyword_tokens
        comp_entries = entries + [(f"#{p}", (p,), False, cfg.garbage_penalty)
                                  for p in alphabet.symbols if p not in (SIL, NOI)]
        self.comp_net = build_network(comp_entries, alphabet, cfg.min_frames, cfg.phone_stay)
        Vc = len(comp_entries)
        comp_lm = np.zeros((Vc + 1, Vc + 1, Vc))
        idx = {e[0]: i for i, e in enumerate(comp_entries)}
        # forbid completing the keyword phrase: block its last token after the prefix
        if len(kw) == 1:
            comp_lm[:, :, idx[kw[0]]] = -math.inf
        else:
            comp_lm[:, idx[kw[-2]], idx[kw[-1]]] = -math.inf
            if len(kw) > 2:
                raise NotImplementedError("keyword phrases longer than two tokens")
        self.comp_lm = comp_lm
        self.kw_net = build_network([(t, lm.lexicon[t], False, cfg.word_penalty) for t in kw],
                                    alphabet, cfg.min_frames, cfg.phone_stay)

    def decode(self, logem: np.ndarray, beam_logp: float | None = None,
               max_tokens: int | None = None) -> tuple[list[str], list[int], list[int], float]:
        cfg = self.cfg
        beam = cfg.beam_logp if beam_logp is None else beam_logp
        width = cfg.max_tokens if max_tokens is None else max_tokens
        if width < 1:
            raise ValueError("beam width must be >= 1")
        net = self.net
        words, starts, ends, score = kernels.lexicon_search(
            logem, net.offsets, net.phone, net.stay, net.adv, net.transparent, net.penalty,
            self.lm_array, cfg.lm_weight, beam, width)
        return [net.words[w] for w in words], starts, ends, score

    def keyword_spans(self, words: Sequence[str], starts, ends) -> list[tuple[int, int]]:
        kw = list(self.lm.keyword_tokens)
        real = [(w, s, e) for w, s, e in zip(words, starts, ends) if not w.startswith("<")]
        spans = []
        for i in range(len(real) - len(kw) + 1):
            if [r[0] for r in real[i:i + len(kw)]] == kw:
                spans.append((real[i][1], real[i + len(kw) - 1][2]))
        return spans

    def keyword_score(self, logem: np.ndarray) -> float:
        """Forced alignment of the keyword phrase over exactly these frames."""
        net = self.kw_net
        em = logem[:, net.phone]
        # chain over all keyword substates; move scores are the within-word adv
        # values, and the word join costs the exit probability
        move = net.adv[:-1].copy()
        score, _ = kernels.chain_scores(em, net.stay, move, False)
        return float(score[-1] + net.penalty.sum())

    def competitor_score(self, logem: np.ndarray) -> float:
        net = self.comp_net
        _, _, _, score = kernels.lexicon_search(
            logem, net.offsets, net.phone, net.stay, net.adv, net.transparent, net.penalty,
            self.comp_lm, 1.0, self.cfg.beam_logp, self.cfg.competitor_tokens)
        return score

    def confidence(self, logem: np.ndarray, span: tuple[int, int]) -> float:
        s, e = span
        seg = logem[s:e + 1]
        return (self.keyword_score(seg) - self.competitor_score(seg)) / (e - s + 1)


def _embed_lm(dense: np.ndarray, V: int, n_fill: int) -> np.ndarray:
    """Re-index a ``(V+1, V+1, V)`` LM so filler words sit between vocab and BOS."""
    W = V + n_fill
    out = np.zeros((W + 1, W + 1, W))
    hist = list(range(V)) + [V]
    new_hist = list(range(V)) + [W]
    for ai, na in zip(hist, new_hist):
        for bi, nb in zip(hist, new_hist):
            out[na, nb, :V] = dense[ai, bi]
    return out


def lm_candidates(stream: AcousticStream, decoder: LmDecoder) -> list[Candidate]:
    logem = _log_post(stream)
    words, starts, ends, _ = decoder.decode(logem)
    out = [Candidate(s, e, decoder.confidence(logem, (s, e)))
           for s, e in decoder.keyword_spans(words, starts, ends)]
    return out


def spot_lm(stream: AcousticStream, decoder: LmDecoder, confidence_threshold: float) -> list[Detection]:
    return select(stream, lm_candidates(stream, decoder), confidence_threshold, Algorithm.LM)
