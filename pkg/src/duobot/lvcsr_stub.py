"""Word-level recognizer stand-in with a calibrated error process.

Each reference word is independently substituted or deleted, and an extra
word may be inserted after it, so the expected number of errors per
reference word equals the configured word error rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .phonostream import UtteranceScript

# default substitution : deletion : insertion proportions
DEFAULT_MIX = (0.7, 0.2, 0.1)


class ErrorKind(str, Enum):
    SUB = "SUB"
    DEL = "DEL"
    INS = "INS"


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    tags: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        if len(self.tags) != len(self.tokens):
            raise ValueError("one intent tag per token")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    @cached_property
    def _index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.tokens)}

    def tag(self, token: str) -> str:
        return self.tags[self._index[token]]

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Vocabulary":
        """Read ``token<TAB>tag`` lines; ``#`` starts a comment line."""
        if path is None:
            text = resources.files("duobot.data").joinpath("vocabulary.tsv").read_text()
        else:
            text = Path(path).read_text()
        toks, tags = [], []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            tok, tag = line.split("\t")
            toks.append(tok)
            tags.append(tag)
        return cls(tuple(toks), tuple(tags))


@dataclass(frozen=True)
class RecognitionResult:
    tokens: tuple[str, ...]
    confidences: tuple[float, ...]
    # per output token: None (correct), SUB or INS
    flags: tuple[ErrorKind | None, ...]
    deletions: tuple[int, ...] = ()      # reference indices of deleted words
    reference: tuple[str, ...] = ()

    def __post_init__(self):
        if not (len(self.tokens) == len(self.confidences) == len(self.flags)):
            raise ValueError("tokens, confidences and flags must align")
        if any(not 0.0 <= c <= 1.0 for c in self.confidences):
            raise ValueError("confidences must lie in [0, 1]")

    @property
    def n_errors(self) -> int:
        return sum(f is not None for f in self.flags) + len(self.deletions)


def recognize(script: UtteranceScript | Sequence[str], wer: float, seed: int,
              vocabulary: Vocabulary | None = None,
              mix: tuple[float, float, float] = DEFAULT_MIX) -> RecognitionResult:
    """Corrupt the reference words so that the expected error rate is ``wer``."""
    if not 0.0 <= wer <= 1.0:
        raise ValueError(f"wer must lie in [0, 1], got {wer}")
    if len(mix) != 3 or min(mix) < 0 or abs(sum(mix) - 1.0) > 1e-9:
        raise ValueError("mix must be three non-negative fractions summing to 1")
    if isinstance(script, UtteranceScript):
        ref = [t for t in script.tokens if not t.startswith("<")]
    else:
        ref = list(script)
    vocab = vocabulary or default_vocabulary()
    p_sub, p_del, p_ins = (wer * m for m in mix)
    rng = np.random.default_rng(seed)
    V = len(vocab)
    out, conf, flags, dels = [], [], [], []
    for i, word in enumerate(ref):
        u = rng.random()
        if u < p_sub:
            j = int(rng.integers(V - 1))
            # skip the reference word itself so a substitution always changes the token
            k = vocab._index.get(word, V)
            sub = vocab.tokens[j + (j >= k)]
            out.append(sub)
            conf.append(float(rng.uniform(0.2, 0.6)))
            flags.append(ErrorKind.SUB)
        elif u < p_sub + p_del:
            dels.append(i)
        else:
            out.append(word)
            conf.append(float(rng.uniform(0.7, 1.0)))
            flags.append(None)
        if rng.random() < p_ins:
            out.append(vocab.tokens[int(rng.integers(V))])
            conf.append(float(rng.uniform(0.1, 0.5)))
            flags.append(ErrorKind.INS)
    return RecognitionResult(tuple(out), tuple(conf), tuple(flags), tuple(dels), tuple(ref))


def word_errors(reference: Sequence[str], hypothesis: Sequence[str]) -> int:
    """Minimum substitutions + deletions + insertions turning reference into hypothesis."""
    table: dict[str, int] = {}
    ref = np.array([table.setdefault(w, len(table)) for w in reference], dtype=np.int64)
    hyp = np.array([table.setdefault(w, len(table)) for w in hypothesis], dtype=np.int64)
    return int(kernels.edit_distance(ref, hyp))


def corpus_wer(pairs: Iterable[tuple[Sequence[str], Sequence[str]]]) -> float:
    """Total word errors over total reference words, aligned per utterance."""
    errors = words = 0
    for ref, hyp in pairs:
        errors += word_errors(ref, hyp)
        words += len(ref)
    if words == 0:
        raise ValueError("empty reference")
    return errors / words


_DEFAULT_VOCAB: Vocabulary | None = None


def default_vocabulary() -> Vocabulary:
    global _DEFAULT_VOCAB
    if _DEFAULT_VOCAB is None:
        _DEFAULT_VOCAB = Vocabulary.load()
    return _DEFAULT_VOCAB
