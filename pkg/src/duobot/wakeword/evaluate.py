"""Corpus-level detector metrics and threshold sweeps."""

from __future__ import annotations

import statistics
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

from ..phonostream import DEFAULT_ALPHABET, KEYWORD_PHONEMES, AcousticStream, Label
from .detect import (Algorithm, Candidate, Detection, LmDecoder, hmm_candidates,
                     lm_candidates, phonetic_candidates, select)
from .models import KeywordHmm, PhonemeBigram, TrigramLm, training_sentences

# a hit on a POSITIVE stream must come no later than this after the keyword ends
TRUE_POSITIVE_WINDOW_MS = 500

Spotter = Callable[[AcousticStream], Sequence[Detection]]


@dataclass
class DetectorMetrics:
    algorithm: str
    threshold: float | None
    n_positive: int
    n_keyword_free: int
    false_positive_rate: float | None
    false_negative_rate: float | None
    mean_latency_ms: float | None
    median_latency_ms: float | None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class WakewordModels:
    bigram: PhonemeBigram
    hmm: KeywordHmm
    lm: TrigramLm
    _decoder: LmDecoder | None = field(default=None, init=False, repr=False)

    @property
    def decoder(self) -> LmDecoder:
        if self._decoder is None:
            self._decoder = LmDecoder(self.lm, self.bigram.alphabet)
        return self._decoder

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.bigram.save(d / "bigram.txt")
        self.hmm.save(d / "hmm.txt")
        self.lm.save(d / "lm.arpa")

    @classmethod
    def load(cls, directory: str | Path) -> "WakewordModels":
        d = Path(directory)
        return cls(PhonemeBigram.load(d / "bigram.txt"), KeywordHmm.load(d / "hmm.txt"),
                   TrigramLm.load(d / "lm.arpa"))


@lru_cache(maxsize=1)
def default_models() -> WakewordModels:
    """Models estimated from the built-in training text (deterministic)."""
    sents = training_sentences()
    return WakewordModels(PhonemeBigram.estimate(sents),
                          KeywordHmm(DEFAULT_ALPHABET, KEYWORD_PHONEMES),
                          TrigramLm.estimate(sents))


def candidates(algorithm: Algorithm, stream: AcousticStream,
               models: WakewordModels) -> list[Candidate]:
    algorithm = Algorithm(algorithm)
    if algorithm is Algorithm.PHONETIC:
        return phonetic_candidates(stream, models.hmm.keyword, models.bigram)
    if algorithm is Algorithm.HMM:
        return hmm_candidates(stream, models.hmm)
    return lm_candidates(stream, models.decoder)


def threshold_score(algorithm: Algorithm, threshold: float) -> float:
    """Minimum candidate score that passes ``threshold``.

    The phonetic threshold is a maximum edit distance and its score is the
    negated distance; the other detectors threshold the score directly.
    """
    return -threshold if Algorithm(algorithm) is Algorithm.PHONETIC else threshold


def make_spotter(algorithm: Algorithm, threshold: float, models: WakewordModels) -> Spotter:
    algorithm = Algorithm(algorithm)
    floor = threshold_score(algorithm, threshold)

    def spot(stream: AcousticStream) -> list[Detection]:
        return select(stream, candidates(algorithm, stream, models), floor, algorithm)
    return spot


def is_true_positive(stream: AcousticStream, det: Detection) -> bool:
    if stream.label is not Label.POSITIVE:
        return False
    span = stream.script.span_frames()
    period = stream.frame_period_ms
    a, b = span[0] * period, span[1] * period
    kw_end = stream.keyword_end_ms
    overlaps = det.start_ms < b and det.end_ms > a
    return overlaps and kw_end <= det.t_detect_ms <= kw_end + TRUE_POSITIVE_WINDOW_MS


def metrics_from_detections(corpus: Sequence[AcousticStream],
                            detections: Sequence[Sequence[Detection]],
                            algorithm: str = "", threshold: float | None = None) -> DetectorMetrics:
    if not corpus:
        raise ValueError("corpus is empty")
    n_pos = n_free = fp = fn = 0
    latencies = []
    for stream, dets in zip(corpus, detections):
        if stream.label is Label.POSITIVE:
            n_pos += 1
            hits = [d for d in dets if is_true_positive(stream, d)]
            if hits:
                latencies.append(hits[0].t_detect_ms - stream.keyword_end_ms)
            else:
                fn += 1
        else:
            n_free += 1
            fp += bool(dets)
    return DetectorMetrics(
        algorithm, threshold, n_pos, n_free,
        fp / n_free if n_free else None,
        fn / n_pos if n_pos else None,
        statistics.fmean(latencies) if latencies else None,
        float(statistics.median(latencies)) if latencies else None,
    )


def evaluate_detector(spotter: Spotter, corpus: Sequence[AcousticStream],
                      algorithm: str = "", threshold: float | None = None) -> DetectorMetrics:
    """FP over keyword-free streams, FN and latency over positives."""
    if not corpus:
        raise ValueError("corpus is empty")
    return metrics_from_detections(corpus, [spotter(s) for s in corpus], algorithm, threshold)


def sweep(algorithm: Algorithm, corpus: Sequence[AcousticStream], models: WakewordModels,
          thresholds: Sequence[float],
          cands: Sequence[Sequence[Candidate]] | None = None) -> list[DetectorMetrics]:
    """Metrics at each threshold, decoding every stream only once."""
    algorithm = Algorithm(algorithm)
    if cands is None:
        cands = [candidates(algorithm, s, models) for s in corpus]
    out = []
    for thr in thresholds:
        floor = threshold_score(algorithm, thr)
        dets = [select(s, c, floor, algorithm) for s, c in zip(corpus, cands)]
        out.append(metrics_from_detections(corpus, dets, algorithm.value, thr))
    return out
