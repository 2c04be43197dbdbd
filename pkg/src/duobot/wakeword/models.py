"""Models used by the three keyword spotters, plus their text formats.

* :class:`PhonemeBigram` - frame-level phoneme transition model for the
  phonetic decoder.
* :class:`KeywordHmm` - left-to-right keyword chain competing with an
  ergodic filler loop.
* :class:`TrigramLm` - interpolated absolute-discounting trigram model over
  the detector vocabulary, with a lexicon mapping tokens to phonemes.

All probabilities are stored as natural logs.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..phonostream import (DEFAULT_ALPHABET, KEYWORD_TOKENS, NOI, SIL,
                           Label, LexEntry, PhonemeAlphabet, ScriptSampler, load_lexicon)

NEG_INF = -math.inf
ROW_TOL = 1e-9


def _check_rows(mat: np.ndarray, what: str, tol: float = ROW_TOL) -> None:
    sums = np.exp(mat).sum(axis=-1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise ValueError(f"{what}: row {int(bad[0])} sums to {sums[bad[0]]!r}, not 1")


def training_sentences(n: int = 4000, seed: int = 2024,
                       sampler: ScriptSampler | None = None) -> list[list[str]]:
    """Domain text for model estimation, drawn from the corpus grammar.

    Uses its own seed so that benchmark corpora never overlap the training text.
    """
    sampler = sampler or ScriptSampler()
    rng = np.random.default_rng(seed)
    labels = [Label.POSITIVE, Label.NEGATIVE, Label.CONFUSABLE]
    mix = np.array([0.3, 0.5, 0.2])
    out = []
    for _ in range(n):
        lab = labels[int(rng.choice(3, p=mix))]
        script = sampler.sample(rng, lab)
        out.append([t for t in script.tokens if not t.startswith("<")])
    return out


# --------------------------------------------------------------------------
# phoneme bigram


@dataclass
class PhonemeBigram:
    """``trans[i, j]`` = log P(frame t+1 is j | frame t is i)."""

    alphabet: PhonemeAlphabet
    trans: np.ndarray
    init: np.ndarray

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        n = len(self.alphabet)
        if self.trans.shape != (n, n) or self.init.shape != (n,):
            raise ValueError("bigram shape does not match alphabet")
        _check_rows(self.trans, "bigram transition")
        _check_rows(self.init[None, :], "bigram initial")

    @classmethod
    def uniform(cls, alphabet: PhonemeAlphabet = DEFAULT_ALPHABET) -> "PhonemeBigram":
        n = len(alphabet)
        return cls(alphabet, np.full((n, n), -math.log(n)), np.full(n, -math.log(n)))

    @classmethod
    def estimate(cls, sentences: Iterable[Sequence[str]], lexicon: Sequence[LexEntry] | None = None,
                 alphabet: PhonemeAlphabet = DEFAULT_ALPHABET, stay: float = 0.85,
                 add_k: float = 0.1) -> "PhonemeBigram":
        lexicon = lexicon if lexicon is not None else load_lexicon()
        pron = {e.token: e.phonemes for e in lexicon}
        n = len(alphabet)
        counts = np.full((n, n), add_k)
        np.fill_diagonal(counts, 0.0)
        sil = alphabet.index(SIL)
        for sent in sentences:
            seq = [sil] + [alphabet.index(p) for t in sent for p in pron[t]] + [sil]
            for a, b in zip(seq, seq[1:]):
                if a != b:
                    counts[a, b] += 1.0
        move = counts / counts.sum(axis=1, keepdims=True)
        trans = (1.0 - stay) * move
        np.fill_diagonal(trans, stay)
        init = np.full(n, 0.1 / (n - 1))
        init[sil] = 0.9
        return cls(alphabet, np.log(trans), np.log(init))

    def save(self, path: str | Path) -> None:
        lines = ["# duobot phoneme bigram v1 (natural log)", "alphabet " + " ".join(self.alphabet.symbols),
                 "init " + " ".join(repr(float(x)) for x in self.init)]
        for sym, row in zip(self.alphabet.symbols, self.trans):
            lines.append(f"row {sym} " + " ".join(repr(float(x)) for x in row))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PhonemeBigram":
        rows, init, alphabet = [], None, None
        for line in Path(path).read_text().splitlines():
            if not line or line.startswith("#"):
                continue
            head, *rest = line.split()
            if head == "alphabet":
                alphabet = PhonemeAlphabet(tuple(rest))
            elif head == "init":
                init = np.array([float(x) for x in rest])
            elif head == "row":
                rows.append([float(x) for x in rest[1:]])
        if alphabet is None or init is None:
            raise ValueError(f"{path}: incomplete bigram file")
        return cls(alphabet, np.array(rows), init)


# --------------------------------------------------------------------------
# keyword / filler HMM


@dataclass
class KeywordHmm:
    """Composite network: filler states ``0..N-1`` then keyword states ``N..N+K-1``.

    Filler state ``i`` stays with ``filler_stay``, enters the keyword with
    ``entry``, and otherwise moves uniformly to another filler state. Keyword
    states stay with ``keyword_stay`` and advance otherwise; the last one
    exits uniformly into the filler.
    """

    alphabet: PhonemeAlphabet
    keyword: tuple[str, ...]
    keyword_stay: float = 0.85
    filler_stay: float = 0.85
    entry: float = 0.01
    trans: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        for p in self.keyword:
            self.alphabet.index(p)
        self._check_params()
        self.trans = self._build()
        self.validate()

    @property
    def keyword_index(self) -> np.ndarray:
        return self.alphabet.encode(self.keyword)

    @property
    def n_states(self) -> int:
        return len(self.alphabet) + len(self.keyword)

    def _build(self) -> np.ndarray:
        n, k = len(self.alphabet), len(self.keyword)
        with np.errstate(divide="ignore"):
            p = np.zeros((n + k, n + k))
            sw = (1.0 - self.filler_stay - self.entry) / (n - 1)
            p[:n, :n] = sw
            np.fill_diagonal(p[:n, :n], self.filler_stay)
            p[:n, n] = self.entry
            for s in range(k):
                p[n + s, n + s] = self.keyword_stay
                if s + 1 < k:
                    p[n + s, n + s + 1] = 1.0 - self.keyword_stay
                else:
                    p[n + s, :n] = (1.0 - self.keyword_stay) / n
            return np.log(p)

    def validate(self) -> None:
        self._check_params()
        _check_rows(self.trans, "keyword HMM")

    def _check_params(self) -> None:
        if not (0 < self.keyword_stay < 1 and 0 < self.filler_stay < 1 and 0 < self.entry < 1):
            raise ValueError("HMM probabilities must lie in (0, 1)")
        if self.filler_stay + self.entry >= 1:
            raise ValueError("filler_stay + entry must be < 1")

    @property
    def composite_filler_transitions(self) -> tuple[float, float]:
        """Log stay and log switch of a filler state inside the composite network."""
        n = len(self.alphabet)
        return math.log(self.filler_stay), math.log((1.0 - self.filler_stay - self.entry) / (n - 1))

    # conditional filler-only transitions (used for the background score)
    @property
    def filler_log_stay(self) -> float:
        return math.log(self.filler_stay / (1.0 - self.entry))

    @property
    def filler_log_switch(self) -> float:
        n = len(self.alphabet)
        return math.log((1.0 - self.filler_stay - self.entry) / (n - 1) / (1.0 - self.entry))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            "# duobot keyword HMM v1\n"
            f"alphabet {' '.join(self.alphabet.symbols)}\n"
            f"keyword {' '.join(self.keyword)}\n"
            f"keyword_stay {self.keyword_stay!r}\nfiller_stay {self.filler_stay!r}\nentry {self.entry!r}\n")

    @classmethod
    def load(cls, path: str | Path) -> "KeywordHmm":
        kv = {}
        for line in Path(path).read_text().splitlines():
            if line and not line.startswith("#"):
                head, *rest = line.split()
                kv[head] = rest
        return cls(PhonemeAlphabet(tuple(kv["alphabet"])), tuple(kv["keyword"]),
                   float(kv["keyword_stay"][0]), float(kv["filler_stay"][0]), float(kv["entry"][0]))


# --------------------------------------------------------------------------
# trigram LM


BOS = "<s>"


@dataclass
class TrigramLm:
    """Interpolated absolute-discounting trigram model.

    ``probs[order]`` maps an n-gram tuple to its log-probability and
    ``backoff[order]`` maps a history tuple to its log backoff weight, i.e.
    the ARPA convention: ``P(w | h) = P_seen(h, w)`` if listed, otherwise
    ``bow(h) * P(w | h[1:])``.
    """

    vocab: tuple[str, ...]
    lexicon: dict[str, tuple[str, ...]]
    probs: dict[int, dict[tuple[str, ...], float]]
    backoff: dict[int, dict[tuple[str, ...], float]]
    keyword_tokens: tuple[str, ...] = KEYWORD_TOKENS

    def __post_init__(self):
        self.index = {w: i for i, w in enumerate(self.vocab)}
        self._dense = None
        for t in self.keyword_tokens:
            if t not in self.index:
                raise ValueError(f"keyword token {t!r} missing from LM vocabulary")

    def logprob(self, word: str, history: Sequence[str]) -> float:
        h = tuple(history)[-2:]
        key = h + (word,)
        p = self.probs[len(key)].get(key)
        if p is not None:
            return p
        if not h:
            return NEG_INF
        return self.backoff[len(h) + 1].get(h, 0.0) + self.logprob(word, h[1:])

    def dense(self) -> np.ndarray:
        """``lm[a, b, w]`` over vocab indices, with index ``V`` as sentence start."""
        if self._dense is None:
            V = len(self.vocab)
            names = list(self.vocab) + [BOS]
            out = np.empty((V + 1, V + 1, V))
            for ai, a in enumerate(names):
                for bi, b in enumerate(names):
                    if b == BOS and a != BOS:
                        h = (BOS,)
                    else:
                        h = (a, b)
                    out[ai, bi] = [self.logprob(w, h) for w in self.vocab]
            self._dense = out
        return self._dense

    def validate(self, tol: float = 1e-6) -> None:
        mats = self.dense()
        sums = np.exp(mats).sum(axis=-1)
        if np.abs(sums - 1.0).max() > tol:
            raise ValueError(f"LM conditional distributions off by {np.abs(sums - 1).max():.3g}")

    @classmethod
    def estimate(cls, sentences: Iterable[Sequence[str]], lexicon: Sequence[LexEntry] | None = None,
                 discount: float = 0.7) -> "TrigramLm":
        lexicon = lexicon if lexicon is not None else load_lexicon()
        vocab = tuple(e.token for e in lexicon if e.cls != "FILLER")
        pron = {e.token: e.phonemes for e in lexicon if e.cls != "FILLER"}
        V = len(vocab)
        c1, c2, c3 = Counter(), Counter(), Counter()
        for sent in sentences:
            padded = [BOS, BOS] + list(sent)
            for i in range(2, len(padded)):
                c1[padded[i]] += 1
                c2[(padded[i - 1], padded[i])] += 1
                c3[(padded[i - 2], padded[i - 1], padded[i])] += 1
        total = sum(c1.values())
        n1 = len([w for w in vocab if c1[w] > 0])
        lam0 = discount * n1 / total
        p1 = {(w,): max(c1[w] - discount, 0.0) / total + lam0 / V for w in vocab}

        def cont(counter):
            hist_tot, hist_types = defaultdict(float), defaultdict(int)
            for gram, c in counter.items():
                hist_tot[gram[:-1]] += c
                hist_types[gram[:-1]] += 1
            return hist_tot, hist_types

        h2_tot, h2_types = cont(c2)
        p2, b2 = {}, {}
        for h, tot in h2_tot.items():
            lam = discount * h2_types[h] / tot
            b2[h] = math.log(lam)
        for gram, c in c2.items():
            h = gram[:-1]
            p2[gram] = (c - discount) / h2_tot[h] + math.exp(b2[h]) * p1[gram[1:]]

        def p2_of(gram):
            if gram in p2:
                return p2[gram]
            h = gram[:-1]
            return math.exp(b2.get(h, 0.0)) * p1[gram[1:]]

        h3_tot, h3_types = cont(c3)
        p3, b3 = {}, {}
        for h, tot in h3_tot.items():
            b3[h] = math.log(discount * h3_types[h] / tot)
        for gram, c in c3.items():
            h = gram[:-1]
            p3[gram] = (c - discount) / h3_tot[h] + math.exp(b3[h]) * p2_of(gram[1:])

        probs = {1: {g: math.log(p) for g, p in p1.items()},
                 2: {g: math.log(p) for g, p in p2.items()},
                 3: {g: math.log(p) for g, p in p3.items()}}
        backoff = {2: b2, 3: b3}
        return cls(vocab, pron, probs, backoff)

    # -- structured text (ARPA layout, natural-log values) --------------------

    def save(self, path: str | Path) -> None:
        lines = ["# duobot trigram LM v1: ARPA layout, natural-log probabilities", "\\data\\"]
        for order in (1, 2, 3):
            lines.append(f"ngram {order}={len(self.probs[order])}")
        for order in (1, 2, 3):
            lines.append("")
            lines.append(f"\\{order}-grams:")
            bows = self.backoff.get(order + 1, {})
            for gram in sorted(self.probs[order]):
                row = f"{self.probs[order][gram]!r}\t{' '.join(gram)}"
                if gram in bows:
                    row += f"\t{bows[gram]!r}"
                lines.append(row)
            # histories such as (<s>,) or (<s>, <s>) have no probability of their own
            for h in sorted(k for k in bows if k not in self.probs[order]):
                lines.append(f"-inf\t{' '.join(h)}\t{bows[h]!r}")
        lines.append("")
        lines.append("\\lexicon:")
        for w in self.vocab:
            lines.append(f"{w}\t{' '.join(self.lexicon[w])}")
        lines.append("\\end\\")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TrigramLm":
        probs = {1: {}, 2: {}, 3: {}}
        backoff = {2: {}, 3: {}}
        lexicon, vocab = {}, []
        section = None
        for line in Path(path).read_text().splitlines():
            if not line or line.startswith("#"):
                continue
            if line.startswith("\\"):
                section = line
                continue
            if section and section.endswith("-grams:"):
                order = int(section[1])
                parts = line.split("\t")
                gram = tuple(parts[1].split())
                if parts[0] != "-inf":
                    probs[order][gram] = float(parts[0])
                if len(parts) > 2:
                    backoff[order + 1][gram] = float(parts[2])
            elif section == "\\lexicon:":
                tok, phones = line.split("\t")
                lexicon[tok] = tuple(phones.split())
                vocab.append(tok)
        return cls(tuple(vocab), lexicon, probs, backoff)


# --------------------------------------------------------------------------
# word networks for the lexicon search kernel


@dataclass
class WordNetwork:
    """Flattened substate arrays in the layout the search kernel expects."""

    words: tuple[str, ...]
    offsets: np.ndarray
    phone: np.ndarray
    stay: np.ndarray
    adv: np.ndarray
    transparent: np.ndarray
    penalty: np.ndarray

    def index(self, token: str) -> int:
        return self.words.index(token)


def build_network(entries: Sequence[tuple[str, Sequence[str], bool, float]],
                  alphabet: PhonemeAlphabet = DEFAULT_ALPHABET,
                  min_frames: int = 2, phone_stay: float = 0.8) -> WordNetwork:
    """Entries are ``(token, phonemes, transparent, penalty)``.

    Each phoneme becomes ``min_frames`` substates; only the last one loops.
    Silence and noise pseudo-words use a single looping substate.
    """
    offsets, phone, stay, adv = [0], [], [], []
    ls, la = math.log(phone_stay), math.log(1.0 - phone_stay)
    for token, phonemes, transparent, _ in entries:
        reps = 1 if transparent else min_frames
        for p in phonemes:
            idx = alphabet.index(p)
            for r in range(reps):
                phone.append(idx)
                if r == reps - 1:
                    stay.append(ls)
                    adv.append(la)
                else:
                    stay.append(NEG_INF)
                    adv.append(0.0)
        offsets.append(len(phone))
    return WordNetwork(
        tuple(e[0] for e in entries), np.array(offsets, dtype=np.int64),
        np.array(phone, dtype=np.int64), np.array(stay), np.array(adv),
        np.array([bool(e[2]) for e in entries], dtype=np.uint8), np.array([float(e[3]) for e in entries]))


FILLER_TOKENS = (("<sil>", (SIL,)), ("<noise>", (NOI,)))
