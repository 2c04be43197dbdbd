"""Keyword spotters, models and corpus metrics."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from duobot.phonostream import (DEFAULT_ALPHABET, KEYWORD_PHONEMES, AcousticStream, CorpusSpec, Label,
                                UtteranceScript, Word, generate_corpus, keyword_script, synthesize_stream)
from duobot.wakeword.detect import (Algorithm, Candidate, Detection, LmDecoder, LmDecoderConfig, collapse,
                                    decode_phonemes, edit_distance, select, spot_hmm, spot_lm,
                                    spot_phonetic)
from duobot.wakeword.evaluate import (candidates, evaluate_detector, is_true_positive, make_spotter,
                                      metrics_from_detections, sweep, threshold_score)
from duobot.wakeword.models import KeywordHmm, PhonemeBigram


def clean(label: Label, k: int = 0):
    return generate_corpus(CorpusSpec(*(3 * (1 if lab is label else 0) for lab in Label)), 0.0, 50 + k)[k]


def test_single_frame_decodes_to_argmax():
    post = np.full((1, len(DEFAULT_ALPHABET)), 0.01)
    post[0, DEFAULT_ALPHABET.index("a")] = 1.0
    post /= post.sum()
    script = UtteranceScript((Word("a", ("a",), (1,)),), Label.NEGATIVE)
    assert decode_phonemes(AcousticStream(script, post), PhonemeBigram.uniform()) == ["a"]


def test_noiseless_decode_collapses_to_script(models):
    for label in Label:
        s = clean(label)
        runs = [r[0] for r in collapse(decode_phonemes(s, models.bigram))]
        from duobot.phonostream import NOI, SIL
        want = [p for p in s.script.phonemes if p not in (SIL, NOI)]
        assert runs == want


def test_decode_rejects_empty_stream(models):
    script = UtteranceScript((), Label.NEGATIVE)
    with pytest.raises(ValueError):
        decode_phonemes(AcousticStream(script, np.zeros((0, len(DEFAULT_ALPHABET)))), models.bigram)


def test_edit_distance_examples():
    assert edit_distance(list(KEYWORD_PHONEMES), list(KEYWORD_PHONEMES)) == 0
    assert edit_distance([], ["a", "b", "c"]) == 3
    assert edit_distance(["k", "i", "t"], ["s", "i", "t", "i"]) == 2


def test_phonetic_clean_positive_fires_once(models):
    s = clean(Label.POSITIVE)
    dets = spot_phonetic(s, KEYWORD_PHONEMES, models.bigram, 1)
    assert len(dets) == 1 and is_true_positive(s, dets[0])
    assert dets[0].score == 0 and dets[0].latency_ms >= 0


def test_phonetic_clean_negative_is_silent(models):
    for k in range(3):
        assert spot_phonetic(clean(Label.NEGATIVE, k), KEYWORD_PHONEMES, models.bigram, 0) == []


def test_phonetic_rejects_negative_distance(models):
    with pytest.raises(ValueError):
        spot_phonetic(clean(Label.POSITIVE), KEYWORD_PHONEMES, models.bigram, -1)


def test_hmm_clean_positive_covers_keyword(models):
    s = clean(Label.POSITIVE)
    dets = spot_hmm(s, models.hmm, 0.0)
    assert len(dets) == 1
    a, b = (f * s.frame_period_ms for f in s.script.span_frames())
    d = dets[0]
    assert d.start_ms <= a + 2 * s.frame_period_ms and d.end_ms >= b - 2 * s.frame_period_ms
    assert is_true_positive(s, d)


def test_lm_clean_positive_and_negative(models):
    s = clean(Label.POSITIVE)
    dets = spot_lm(s, models.decoder, 0.0)
    assert len(dets) == 1 and dets[0].score > 0 and is_true_positive(s, dets[0])
    for k in range(3):
        assert spot_lm(clean(Label.NEGATIVE, k), models.decoder, 0.0) == []


def test_lm_decoder_rejects_empty_beam(models):
    with pytest.raises(ValueError):
        LmDecoder(models.lm, DEFAULT_ALPHABET, LmDecoderConfig(max_tokens=0))
    with pytest.raises(ValueError):
        models.decoder.decode(clean(Label.POSITIVE).log_posteriors(), max_tokens=0)


def test_lm_normalises(models):
    models.lm.validate(1e-6)
    assert all(t in models.lm.vocab for t in models.lm.keyword_tokens)


def test_malformed_models_rejected():
    n = len(DEFAULT_ALPHABET)
    with pytest.raises(ValueError):
        PhonemeBigram(DEFAULT_ALPHABET, np.full((n, n), math.log(0.5)), np.full(n, -math.log(n)))
    with pytest.raises(ValueError):
        KeywordHmm(DEFAULT_ALPHABET, KEYWORD_PHONEMES, filler_stay=0.95, entry=0.1)
    hmm = KeywordHmm(DEFAULT_ALPHABET, KEYWORD_PHONEMES)
    hmm.trans[0, 0] = 0.0
    with pytest.raises(ValueError):
        spot_hmm(clean(Label.POSITIVE), hmm, 0.0)


def test_model_files_round_trip(tmp_path, models):
    models.save(tmp_path)
    from duobot.wakeword.evaluate import WakewordModels
    back = WakewordModels.load(tmp_path)
    assert np.array_equal(back.bigram.trans, models.bigram.trans)
    assert back.hmm.keyword == models.hmm.keyword
    assert np.allclose(back.lm.dense(), models.lm.dense(), atol=1e-12)


# -- metrics


def stub(fire_on: set[int], corpus):
    ids = {id(s): k for k, s in enumerate(corpus)}

    def spot(stream):
        if ids[id(stream)] in fire_on:
            t = stream.keyword_end_ms or 0
            return [Detection(t + 10, 1.0, Algorithm.LM, 0, stream.duration_ms,
                              10 if stream.keyword_end_ms is not None else None)]
        return []
    return spot


def test_fp_counting_oracle():
    corpus = generate_corpus(CorpusSpec(0, 100, 0), 0.3, 1)
    m = evaluate_detector(stub({17}, corpus), corpus)
    assert m.false_positive_rate == 0.01
    assert m.false_negative_rate is None and m.mean_latency_ms is None


def test_all_positive_corpus_has_no_fp_rate():
    corpus = generate_corpus(CorpusSpec(5, 0, 0), 0.3, 1)
    m = evaluate_detector(stub(set(range(5)), corpus), corpus)
    assert m.false_positive_rate is None and m.false_negative_rate == 0.0
    assert m.mean_latency_ms == 10


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        evaluate_detector(lambda s: [], [])


def test_sweep_equals_direct_evaluation(small_corpus, models):
    for alg, thrs in ((Algorithm.PHONETIC, [0, 1, 2]), (Algorithm.HMM, [10.0, 20.0]), (Algorithm.LM, [0.0])):
        swept = sweep(alg, small_corpus, models, thrs)
        for thr, m in zip(thrs, swept):
            direct = evaluate_detector(make_spotter(alg, thr, models), small_corpus, alg.value, thr)
            assert m == direct


def test_debounce():
    s = synthesize_stream(keyword_script(frames_per_phoneme=30), 0.0, 1)
    cands = [Candidate(0, 10, 1.0), Candidate(20, 30, 1.0), Candidate(100, 110, 2.0)]
    dets = select(s, cands, 0.0, Algorithm.HMM)
    # the first two decision times are 200 ms apart: one detection each side of the gap
    assert [d.t_detect_ms for d in dets] == [360, 1160]
    assert [d.score for d in dets] == [1.0, 2.0]


# -- properties

noisy = st.tuples(st.sampled_from(list(Label)), st.integers(0, 10 ** 6), st.sampled_from([0.3, 0.6, 0.9]))


def make(label, seed, noise):
    from duobot.phonostream import ScriptSampler
    return synthesize_stream(ScriptSampler().sample(np.random.default_rng(seed), label), noise, seed)


GRIDS = {Algorithm.PHONETIC: [0, 1, 2, 3, 4, 6], Algorithm.HMM: [40, 20, 10, 0, -20, -60],
         Algorithm.LM: [2.0, 0.5, 0.0, -1.0, -5.0]}


@given(args=noisy, alg=st.sampled_from(list(Algorithm)))
def test_detection_count_monotone_in_threshold(args, alg, models):
    s = make(*args)
    c = candidates(alg, s, models)
    counts = [len(select(s, c, threshold_score(alg, t), alg)) for t in GRIDS[alg]]
    assert counts == sorted(counts)


@given(args=noisy, alg=st.sampled_from(list(Algorithm)))
def test_detectors_deterministic(args, alg, models):
    s = make(*args)
    thr = {Algorithm.PHONETIC: 1, Algorithm.HMM: 20.0, Algorithm.LM: 0.0}[alg]
    spot = make_spotter(alg, thr, models)
    assert spot(s) == spot(make(*args))


@given(args=noisy, alg=st.sampled_from(list(Algorithm)))
def test_detections_within_stream(args, alg, models):
    s = make(*args)
    for d in make_spotter(alg, GRIDS[alg][-1], models)(s):
        assert 0 <= d.t_detect_ms <= s.duration_ms
        if is_true_positive(s, d):
            assert d.latency_ms >= 0


def test_order_independent_metrics(small_corpus, models):
    spot = make_spotter(Algorithm.HMM, 20.0, models)
    dets = [spot(s) for s in small_corpus]
    a = metrics_from_detections(small_corpus, dets)
    rev = list(reversed(small_corpus))
    b = metrics_from_detections(rev, [spot(s) for s in rev])
    assert a == b
