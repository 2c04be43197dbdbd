"""Synthetic posterior streams and corpora."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from duobot.phonostream import (DEFAULT_ALPHABET, KEYWORD_PHONEMES, NOI, SIL, SPREAD, CorpusSpec, Label,
                                PhonemeAlphabet, ScriptSampler, UtteranceScript, Word, confusion_matrix,
                                generate_corpus, keyword_script, read_corpus, synthesize_stream,
                                write_corpus)
from duobot.wakeword.detect import edit_distance


def test_noise_zero_is_one_hot():
    st_ = synthesize_stream(keyword_script(), 0.0, 1)
    assert np.array_equal(st_.posteriors.max(axis=1), np.ones(len(st_)))
    assert st_.alphabet.decode(st_.posteriors.argmax(axis=1)) == st_.script.frame_labels


def test_synthesis_is_deterministic():
    a = synthesize_stream(keyword_script(), 0.4, 9)
    b = synthesize_stream(keyword_script(), 0.4, 9)
    assert np.array_equal(a.posteriors, b.posteriors)
    c = synthesize_stream(keyword_script(), 0.4, 10)
    assert not np.array_equal(a.posteriors, c.posteriors)


def test_mean_true_posterior_matches_noise():
    # 1000 frames of keyword speech at noise 0.3
    script = keyword_script(frames_per_phoneme=1000 // len(KEYWORD_PHONEMES) + 1)
    stream = synthesize_stream(script, 0.3, 7)
    post = stream.posteriors[:1000]
    truth = stream.alphabet.encode(script.frame_labels[:1000])
    mean = post[np.arange(1000), truth].mean()
    assert abs(mean - (1 - 0.3 * SPREAD)) <= 0.01


def test_empty_corpus():
    assert generate_corpus(CorpusSpec(0, 0, 0), 0.5, 1) == []


def test_corpus_histogram():
    corpus = generate_corpus(CorpusSpec(10, 10, 10), 0.5, 1)
    counts = {lab: sum(s.label is lab for s in corpus) for lab in Label}
    assert counts == {Label.POSITIVE: 10, Label.NEGATIVE: 10, Label.CONFUSABLE: 10}


def test_confusables_are_near_the_keyword():
    for s in generate_corpus(CorpusSpec(0, 0, 200), 0.0, 4):
        assert 1 <= edit_distance(s.script.span_phonemes(), KEYWORD_PHONEMES) <= 2


def test_positives_contain_keyword_and_negatives_do_not():
    kw = list(KEYWORD_PHONEMES)
    for s in generate_corpus(CorpusSpec(30, 30, 0), 0.0, 4):
        s.script.validate()
        phones = [p for p in s.script.phonemes if p not in (SIL, NOI)]
        found = any(phones[i:i + len(kw)] == kw for i in range(len(phones)))
        assert found == (s.label is Label.POSITIVE)


def test_stream_independent_of_other_counts():
    a = generate_corpus(CorpusSpec(3, 5, 2), 0.6, 11)
    b = generate_corpus(CorpusSpec(3, 9, 7), 0.6, 11)
    assert all(np.array_equal(x.posteriors, y.posteriors) for x, y in zip(a[:8], b[:8]))


def test_keyword_script():
    s = keyword_script()
    assert len(s.phonemes) == 7 and s.phonemes[-1] == "d"
    assert s.label is Label.POSITIVE


def test_confusion_matrix_rows():
    c = confusion_matrix()
    assert np.allclose(c.sum(axis=1), 1.0) and np.all(np.diag(c) == 0)


def test_corpus_round_trip(tmp_path):
    corpus = generate_corpus(CorpusSpec(3, 3, 3), 0.6, 2)
    write_corpus(corpus, tmp_path / "c.jsonl", {"seed": 2})
    back = read_corpus(tmp_path / "c.jsonl")
    assert len(back) == 9
    for x, y in zip(corpus, back):
        assert x.script == y.script and np.array_equal(x.posteriors, y.posteriors)


def test_bad_inputs_rejected(tmp_path):
    with pytest.raises(ValueError):
        PhonemeAlphabet(("a", "b", "c"))
    with pytest.raises(ValueError):
        PhonemeAlphabet(("a", SIL, SIL, NOI))
    with pytest.raises(ValueError):
        Word("x", ("a", "b"), (1,))
    with pytest.raises(ValueError):
        synthesize_stream(keyword_script(), 1.5, 0)
    with pytest.raises(ValueError):
        CorpusSpec(-1, 0, 0)
    bad = UtteranceScript((Word("x", ("a",), (3,)),), Label.POSITIVE, target_span=(0, 0))
    with pytest.raises(ValueError):
        bad.validate()
    (tmp_path / "x.jsonl").write_text('{"format": "other"}\n')
    with pytest.raises(ValueError):
        read_corpus(tmp_path / "x.jsonl")


sampler = ScriptSampler()


@given(st.sampled_from(list(Label)), st.integers(0, 2 ** 32 - 1), st.floats(0.0, 1.0))
def test_posterior_rows_are_distributions(label, seed, noise):
    script = sampler.sample(np.random.default_rng(seed), label)
    stream = synthesize_stream(script, noise, seed)
    assert np.all(stream.posteriors >= 0)
    assert np.allclose(stream.posteriors.sum(axis=1), 1.0, atol=1e-12)
    assert len(stream) == script.n_frames


@given(st.sampled_from(list(Label)), st.integers(0, 2 ** 32 - 1))
def test_noiseless_argmax_round_trip(label, seed):
    script = sampler.sample(np.random.default_rng(seed), label)
    stream = synthesize_stream(script, 0.0, seed)
    assert DEFAULT_ALPHABET.decode(stream.posteriors.argmax(axis=1)) == script.frame_labels


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 0.99))
def test_true_phoneme_stays_most_likely_below_full_noise(seed, noise):
    # s < 2 * SPREAD * noise < 1, so the true phoneme keeps mass above 1 - noise
    stream = synthesize_stream(keyword_script(), noise, seed)
    truth = stream.alphabet.encode(stream.script.frame_labels)
    assert np.all(stream.posteriors[np.arange(len(stream)), truth] >= 1 - noise - 1e-12)
