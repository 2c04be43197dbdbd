"""Synthetic phoneme-posterior streams.

Stands in for the microphone + acoustic front end: every detector in
:mod:`duobot.wakeword` consumes :class:`AcousticStream` objects produced here.

Emission rule for a frame whose true phoneme is ``i``::

    s         = noise * SPREAD * (u_seg + u_frame)      u_* ~ U(0, 1)
    posterior = (1 - s) * e_i + s * (CONFUSER_SHARE * e_j + (1 - CONFUSER_SHARE) * C[i])

``u_seg`` and the confuser ``j ~ C[i]`` are drawn once per phoneme segment,
``u_frame`` once per frame, so errors come in runs the way mispronunciations
do. ``C`` is the banded confusion matrix from :func:`confusion_matrix`
(zero diagonal), hence the expected mass on the true phoneme is exactly
``1 - noise * SPREAD``.
"""

from __future__ import annotations

import base64
import json
import zlib
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

SIL = "SIL"
NOI = "NOI"

# Ordered so that acoustically close symbols are index neighbours; the
# confusion matrix is banded in this order.
SPEECH_SYMBOLS = (
    "a", "aa", "e", "i", "ii", "u", "uu", "o",
    "w", "j",
    "l", "r", "n", "m",
    "b", "d", "t", "k", "q", "g",
    "f", "th", "dh", "s", "z", "sh", "h", "kh",
)

SPREAD = 0.5
CONFUSER_SHARE = 0.6
# Off-diagonal confusion weights by index offset; the rest is spread evenly.
BAND_WEIGHTS = {1: 0.3, 2: 0.1}
BAND_FLOOR = 0.1

FRAME_PERIOD_MS = 10
KEYWORD_PHONEMES = ("j", "a", "r", "a", "sh", "i", "d")
KEYWORD_TOKENS = ("ya", "rashid")

CORPUS_FORMAT = "duobot-corpus"
CORPUS_VERSION = 1


@dataclass(frozen=True)
class PhonemeAlphabet:
    symbols: tuple[str, ...] = SPEECH_SYMBOLS + (SIL, NOI)

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("phoneme labels must be unique")
        if SIL not in self.symbols or NOI not in self.symbols:
            raise ValueError("alphabet must contain SIL and NOI")
        if len(self.symbols) < 3:
            raise ValueError("alphabet needs at least 3 symbols")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.symbols)})

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, sym: str) -> bool:
        return sym in self._index

    def index(self, sym: str) -> int:
        try:
            return self._index[sym]
        except KeyError:
            raise ValueError(f"unknown phoneme {sym!r}") from None

    def encode(self, phonemes: Iterable[str]) -> np.ndarray:
        return np.array([self.index(p) for p in phonemes], dtype=np.int64)

    def decode(self, indices: Iterable[int]) -> list[str]:
        return [self.symbols[int(i)] for i in indices]


DEFAULT_ALPHABET = PhonemeAlphabet()


class Label(str, Enum):
    POSITIVE = "POSITIVE"
    NEGATIVE = "NEGATIVE"
    CONFUSABLE = "CONFUSABLE"


@dataclass(frozen=True)
class Word:
    token: str
    phonemes: tuple[str, ...]
    durations: tuple[int, ...]

    def __post_init__(self):
        if len(self.phonemes) != len(self.durations):
            raise ValueError(f"{self.token}: one duration per phoneme required")
        if any(d < 1 for d in self.durations):
            raise ValueError(f"{self.token}: durations must be >= 1 frame")

    @property
    def n_frames(self) -> int:
        return sum(self.durations)


@dataclass(frozen=True)
class UtteranceScript:
    words: tuple[Word, ...]
    label: Label
    start_ms: int = 0
    # (first, last) word indices of the wake phrase (POSITIVE) or of the
    # near-keyword phrase (CONFUSABLE).
    target_span: tuple[int, int] | None = None

    @property
    def tokens(self) -> list[str]:
        return [w.token for w in self.words]

    @property
    def phonemes(self) -> list[str]:
        return [p for w in self.words for p in w.phonemes]

    @property
    def frame_labels(self) -> list[str]:
        return [p for w in self.words for p, d in zip(w.phonemes, w.durations) for _ in range(d)]

    @property
    def n_frames(self) -> int:
        return sum(w.n_frames for w in self.words)

    def span_frames(self) -> tuple[int, int] | None:
        """Frame range ``[first, end)`` covered by ``target_span``."""
        if self.target_span is None:
            return None
        first, last = self.target_span
        start = sum(w.n_frames for w in self.words[:first])
        end = start + sum(w.n_frames for w in self.words[first:last + 1])
        return start, end

    def span_phonemes(self) -> list[str]:
        if self.target_span is None:
            return []
        first, last = self.target_span
        return [p for w in self.words[first:last + 1] for p in w.phonemes]

    def validate(self, alphabet: PhonemeAlphabet = DEFAULT_ALPHABET,
                 keyword: Sequence[str] = KEYWORD_PHONEMES) -> None:
        for p in self.phonemes:
            if p not in alphabet:
                raise ValueError(f"phoneme {p!r} not in alphabet")
        if self.label is Label.POSITIVE:
            if list(keyword) != self.span_phonemes():
                raise ValueError("POSITIVE script must contain the keyword contiguously")


@dataclass(frozen=True)
class PhonemeFrame:
    t_ms: int
    posterior: np.ndarray


@dataclass
class AcousticStream:
    script: UtteranceScript
    posteriors: np.ndarray
    frame_period_ms: int = FRAME_PERIOD_MS
    noise: float = 0.0
    alphabet: PhonemeAlphabet = field(default=DEFAULT_ALPHABET, repr=False)

    def __len__(self) -> int:
        return self.posteriors.shape[0]

    @property
    def label(self) -> Label:
        return self.script.label

    @property
    def duration_ms(self) -> int:
        return len(self) * self.frame_period_ms

    @property
    def keyword_end_ms(self) -> int | None:
        """Time at which the last keyword phoneme ends (POSITIVE only)."""
        if self.script.label is not Label.POSITIVE:
            return None
        _, end = self.script.span_frames()
        return end * self.frame_period_ms

    @property
    def frames(self) -> Iterator[PhonemeFrame]:
        for k, row in enumerate(self.posteriors):
            yield PhonemeFrame(k * self.frame_period_ms, row)

    def log_posteriors(self, floor: float = 1e-6) -> np.ndarray:
        return np.log(np.maximum(self.posteriors, floor))


def confusion_matrix(alphabet: PhonemeAlphabet = DEFAULT_ALPHABET) -> np.ndarray:
    """Banded confusion matrix with zero diagonal; rows sum to one."""
    n = len(alphabet)
    mat = np.zeros((n, n))
    for i in range(n):
        for off, w in BAND_WEIGHTS.items():
            for j in (i - off, i + off):
                if 0 <= j < n:
                    mat[i, j] += w
        row_band = mat[i].sum()
        mat[i] *= (1.0 - BAND_FLOOR) / row_band
        others = [j for j in range(n) if j != i]
        mat[i, others] += BAND_FLOOR / len(others)
    return mat


def keyword_script(alphabet: PhonemeAlphabet = DEFAULT_ALPHABET,
                   keyword: Sequence[str] = KEYWORD_PHONEMES,
                   frames_per_phoneme: int = 6) -> UtteranceScript:
    for p in keyword:
        alphabet.index(p)
    word = Word("ya-rashid", tuple(keyword), (frames_per_phoneme,) * len(keyword))
    return UtteranceScript((word,), Label.POSITIVE, target_span=(0, 0))


def synthesize_stream(script: UtteranceScript, noise: float, seed: int,
                      alphabet: PhonemeAlphabet = DEFAULT_ALPHABET,
                      frame_period_ms: int = FRAME_PERIOD_MS) -> AcousticStream:
    if not 0.0 <= noise <= 1.0:
        raise ValueError(f"noise must lie in [0, 1], got {noise}")
    rng = np.random.default_rng(seed)
    conf = confusion_matrix(alphabet)
    n = len(alphabet)
    total = script.n_frames
    post = np.zeros((total, n))
    row = 0
    for word in script.words:
        for ph, dur in zip(word.phonemes, word.durations):
            i = alphabet.index(ph)
            u_seg = rng.random()
            j = int(rng.choice(n, p=conf[i]))
            u_frame = rng.random(dur)
            s = noise * SPREAD * (u_seg + u_frame)
            block = np.outer(s * (1.0 - CONFUSER_SHARE), conf[i])
            block[:, j] += s * CONFUSER_SHARE
            block[:, i] += 1.0 - s
            post[row:row + dur] = block
            row += dur
    return AcousticStream(script, post, frame_period_ms, noise, alphabet)


# --------------------------------------------------------------------------
# lexicon and corpus generation


@dataclass(frozen=True)
class LexEntry:
    token: str
    cls: str
    phonemes: tuple[str, ...]


def load_lexicon(path: str | Path | None = None) -> list[LexEntry]:
    if path is None:
        text = resources.files("duobot.data").joinpath("lexicon.txt").read_text()
    else:
        text = Path(path).read_text()
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        token, cls, phones = line.split("\t")
        out.append(LexEntry(token, cls, tuple(phones.split())))
    return out


@dataclass(frozen=True)
class CorpusSpec:
    positives: int = 200
    negatives: int = 1000
    confusables: int = 1000

    def __post_init__(self):
        if min(self.positives, self.negatives, self.confusables) < 0:
            raise ValueError("corpus counts must be >= 0")


# Near-keyword phrases used for CONFUSABLE scripts, with sampling weights.
# Each differs from the wake phrase by one or two phoneme edits.
NEAR_PHRASES: tuple[tuple[tuple[str, ...], float], ...] = (
    # one phoneme edit away from the wake phrase
    (("ya", "rasheed"), 1.0),
    (("ya", "rashed"), 1.0),
    (("ya", "rashad"), 1.0),
    (("ya", "rashim"), 1.0),
    (("ya", "rasid"), 1.0),
    (("ya", "rakid"), 1.0),
    (("ya", "washid"), 1.0),
    (("ya", "rashida"), 1.0),
    (("wa", "rashid"), 1.0),
    (("yu", "rashid"), 1.0),
    # two or more edits away
    (("ya", "rashu"), 10.0),
    (("wa", "washid"), 10.0),
    (("wa", "rashad"), 10.0),
    (("wa", "rasheed"), 10.0),
    (("wa", "rashed"), 10.0),
    (("yu", "rasheed"), 10.0),
    (("yu", "rashad"), 10.0),
    (("yu", "rashed"), 10.0),
    (("yu", "washid"), 10.0),
)

LEAD_SIL = (15, 30)
TRAIL_SIL = (40, 60)
PHONEME_FRAMES = (4, 10)


class ScriptSampler:
    """Draws labelled utterance scripts from the lexicon."""

    def __init__(self, lexicon: list[LexEntry] | None = None,
                 keyword: Sequence[str] = KEYWORD_PHONEMES,
                 keyword_tokens: Sequence[str] = KEYWORD_TOKENS):
        self.lexicon = lexicon if lexicon is not None else load_lexicon()
        self.by_token = {e.token: e for e in self.lexicon}
        self.carriers = [e for e in self.lexicon if e.cls == "CARRIER"]
        self.keyword = tuple(keyword)
        self.keyword_tokens = tuple(keyword_tokens)
        self._kw_grams = _ngrams(self.keyword, 4)

    def _word(self, rng: np.random.Generator, token: str) -> Word:
        e = self.by_token[token]
        lo, hi = PHONEME_FRAMES
        durs = tuple(int(d) for d in rng.integers(lo, hi + 1, size=len(e.phonemes)))
        return Word(e.token, e.phonemes, durs)

    def _sil(self, rng: np.random.Generator, bounds: tuple[int, int]) -> Word:
        return Word("<sil>", (SIL,), (int(rng.integers(bounds[0], bounds[1] + 1)),))

    def _carriers(self, rng: np.random.Generator, lo: int, hi: int) -> list[str]:
        n = int(rng.integers(lo, hi + 1))
        return [self.carriers[int(k)].token for k in rng.integers(0, len(self.carriers), n)]

    def _assemble(self, rng, before, target, after, label) -> UtteranceScript:
        words = [self._sil(rng, LEAD_SIL)]
        words += [self._word(rng, t) for t in before]
        first = len(words)
        words += [self._word(rng, t) for t in target]
        last = len(words) - 1
        words += [self._word(rng, t) for t in after]
        words.append(self._sil(rng, TRAIL_SIL))
        span = (first, last) if target else None
        return UtteranceScript(tuple(words), label, target_span=span)

    def _clean_context(self, tokens: list[str]) -> bool:
        phones = [p for t in tokens for p in self.by_token[t].phonemes]
        return not (_ngrams(phones, 4) & self._kw_grams) and _no_adjacent_repeat(phones)

    def sample(self, rng: np.random.Generator, label: Label) -> UtteranceScript:
        while True:
            if label is Label.POSITIVE:
                before, after = self._carriers(rng, 0, 2), self._carriers(rng, 1, 3)
                target = list(self.keyword_tokens)
            elif label is Label.CONFUSABLE:
                before, after = self._carriers(rng, 0, 2), self._carriers(rng, 0, 2)
                weights = np.array([w for _, w in NEAR_PHRASES])
                k = int(rng.choice(len(NEAR_PHRASES), p=weights / weights.sum()))
                target = list(NEAR_PHRASES[k][0])
            else:
                before, after, target = self._carriers(rng, 2, 5), [], []
            ok = self._clean_context(before) and self._clean_context(after)
            if ok and target:
                ok = self._boundary_ok(before + target + after, target)
            if ok:
                return self._assemble(rng, before, target, after, label)

    def _boundary_ok(self, tokens: list[str], target: list[str]) -> bool:
        """Context must not add keyword 4-grams across word joins."""
        phones = [p for t in tokens for p in self.by_token[t].phonemes]
        core = [p for t in target for p in self.by_token[t].phonemes]
        return (_count_grams(phones, self._kw_grams) == _count_grams(core, self._kw_grams)
                and _no_adjacent_repeat(phones))


def _ngrams(seq: Sequence[str], n: int) -> set[tuple[str, ...]]:
    return {tuple(seq[i:i + n]) for i in range(len(seq) - n + 1)}


def _count_grams(seq: Sequence[str], grams: set) -> int:
    return sum(1 for i in range(len(seq) - 3) if tuple(seq[i:i + 4]) in grams)


def _no_adjacent_repeat(seq: Sequence[str]) -> bool:
    return all(a != b for a, b in zip(seq, seq[1:]))


def generate_corpus(spec: CorpusSpec, noise: float, seed: int,
                    alphabet: PhonemeAlphabet = DEFAULT_ALPHABET,
                    sampler: ScriptSampler | None = None) -> list[AcousticStream]:
    """Labelled corpus: positives, then negatives, then confusables.

    Every stream gets its own child seed, so a stream does not change when
    the counts of the other labels change.
    """
    sampler = sampler or ScriptSampler()
    out = []
    plan = [(Label.POSITIVE, spec.positives), (Label.NEGATIVE, spec.negatives),
            (Label.CONFUSABLE, spec.confusables)]
    for lab_idx, (label, count) in enumerate(plan):
        for k in range(count):
            ss = np.random.SeedSequence([seed, lab_idx, k])
            script_rng, noise_seed = np.random.default_rng(ss.spawn(1)[0]), ss.generate_state(1)[0]
            script = sampler.sample(script_rng, label)
            out.append(synthesize_stream(script, noise, int(noise_seed), alphabet))
    return out


# --------------------------------------------------------------------------
# serialization: line-delimited JSON, one header line then one stream per line.
# Posteriors are stored exactly as zlib-compressed little-endian float64.


def _script_to_dict(script: UtteranceScript) -> dict:
    return {
        "label": script.label.value,
        "start_ms": script.start_ms,
        "target_span": list(script.target_span) if script.target_span else None,
        "words": [{"token": w.token, "phonemes": list(w.phonemes), "durations": list(w.durations)}
                  for w in script.words],
    }


def _script_from_dict(d: dict) -> UtteranceScript:
    words = tuple(Word(w["token"], tuple(w["phonemes"]), tuple(w["durations"])) for w in d["words"])
    span = tuple(d["target_span"]) if d["target_span"] is not None else None
    return UtteranceScript(words, Label(d["label"]), d["start_ms"], span)


def write_corpus(streams: Sequence[AcousticStream], path: str | Path, meta: dict | None = None) -> None:
    path = Path(path)
    alphabet = streams[0].alphabet if streams else DEFAULT_ALPHABET
    with path.open("w") as fh:
        header = {"format": CORPUS_FORMAT, "version": CORPUS_VERSION,
                  "alphabet": list(alphabet.symbols), "count": len(streams), "meta": meta or {}}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for st in streams:
            raw = np.ascontiguousarray(st.posteriors, dtype="<f8").tobytes()
            rec = {
                "script": _script_to_dict(st.script),
                "frame_period_ms": st.frame_period_ms,
                "noise": st.noise,
                "shape": list(st.posteriors.shape),
                "posteriors": base64.b64encode(zlib.compress(raw, 6)).decode("ascii"),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_corpus(path: str | Path) -> list[AcousticStream]:
    with Path(path).open() as fh:
        header = json.loads(fh.readline())
        if header.get("format") != CORPUS_FORMAT:
            raise ValueError(f"{path}: not a duobot corpus file")
        if header.get("version") != CORPUS_VERSION:
            raise ValueError(f"{path}: unsupported corpus version {header.get('version')}")
        alphabet = PhonemeAlphabet(tuple(header["alphabet"]))
        out = []
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            raw = zlib.decompress(base64.b64decode(rec["posteriors"]))
            post = np.frombuffer(raw, dtype="<f8").reshape(rec["shape"]).copy()
            out.append(AcousticStream(_script_from_dict(rec["script"]), post,
                                      rec["frame_period_ms"], rec["noise"], alphabet))
    return out
