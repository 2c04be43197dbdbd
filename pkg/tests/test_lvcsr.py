"""Word-level recognizer stand-in."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from duobot.dialog.catalog import load_grammar
from duobot.lvcsr_stub import (ErrorKind, RecognitionResult, Vocabulary, corpus_wer, default_vocabulary,
                               recognize, word_errors)
from duobot.phonostream import CorpusSpec, generate_corpus

VOCAB = default_vocabulary()


def sentences(n: int, length: int, seed: int) -> list[list[str]]:
    rng = np.random.default_rng(seed)
    return [[VOCAB.tokens[k] for k in rng.integers(0, len(VOCAB), length)] for _ in range(n)]


def test_zero_wer_is_identity():
    for ref in sentences(20, 8, 1):
        r = recognize(ref, 0.0, 3)
        assert list(r.tokens) == ref and r.n_errors == 0


def test_script_input_drops_fillers():
    s = generate_corpus(CorpusSpec(1, 0, 0), 0.0, 1)[0].script
    r = recognize(s, 0.0, 1)
    assert list(r.tokens) == [t for t in s.tokens if not t.startswith("<")]


def test_full_substitution_matches_nothing():
    for k, ref in enumerate(sentences(50, 10, 2)):
        r = recognize(ref, 1.0, k, mix=(1.0, 0.0, 0.0))
        assert len(r.tokens) == len(ref)
        assert all(a != b for a, b in zip(r.tokens, ref))


def test_wer_band_at_100k_words():
    refs = sentences(10_000, 10, 5)
    pairs = [(ref, recognize(ref, 0.06, 1 + k).tokens) for k, ref in enumerate(refs)]
    assert 0.055 <= corpus_wer(pairs) <= 0.065


def test_wer_range_checked():
    for bad in (-0.1, 1.5):
        with pytest.raises(ValueError):
            recognize(["a"], bad, 0)
    with pytest.raises(ValueError):
        recognize(["a"], 0.1, 0, mix=(0.5, 0.5, 0.5))


def test_seeds_decorrelate_error_positions():
    ref = sentences(1, 2000, 9)[0]
    a = recognize(ref, 0.3, 1)
    b = recognize(ref, 0.3, 2)
    da, db = set(a.deletions), set(b.deletions)
    assert da != db
    # agreement of "word kept" indicators is no better than chance plus slack
    keep_a = np.array([i not in da for i in range(len(ref))])
    keep_b = np.array([i not in db for i in range(len(ref))])
    p = keep_a.mean() * keep_b.mean() + (1 - keep_a.mean()) * (1 - keep_b.mean())
    assert abs((keep_a == keep_b).mean() - p) < 0.03
    assert recognize(ref, 0.3, 1) == a


def test_vocabulary():
    assert len(VOCAB) == 500 and len(set(VOCAB.tokens)) == 500
    for rule in load_grammar():
        for tok in rule.pattern:
            assert tok in VOCAB
    with pytest.raises(ValueError):
        Vocabulary(("a", "a"), ("x", "x"))


def test_result_validation():
    with pytest.raises(ValueError):
        RecognitionResult(("a",), (1.5,), (None,))
    with pytest.raises(ValueError):
        RecognitionResult(("a", "b"), (0.5,), (None,))


def replay(ref, r: RecognitionResult) -> list[str]:
    """Rebuild the hypothesis from the reference and the recorded edits."""
    out = []
    k = 0
    dels = set(r.deletions)
    for i, w in enumerate(ref):
        if i not in dels:
            if r.flags[k] is None:
                assert r.tokens[k] == w
            else:
                assert r.flags[k] is ErrorKind.SUB and r.tokens[k] != w
            out.append(r.tokens[k])
            k += 1
        while k < len(r.tokens) and r.flags[k] is ErrorKind.INS:
            out.append(r.tokens[k])
            k += 1
    assert k == len(r.tokens)
    return out


@given(st.integers(0, 10 ** 6), st.floats(0.0, 1.0), st.integers(0, 30))
def test_flags_consistent_with_diff(seed, wer, length):
    ref = sentences(1, length, seed)[0]
    r = recognize(ref, wer, seed)
    assert replay(ref, r) == list(r.tokens)
    assert all(0.0 <= c <= 1.0 for c in r.confidences)
    # the edit script is one valid alignment, so it can only overcount
    assert word_errors(ref, r.tokens) <= r.n_errors
