"""Compare the compiled kernels with the pure-Python fallback.

The detectors run once over a small noisy corpus with every kernel call
recorded; each backend then replays the recorded calls. Outputs are
checked for agreement before the timings are reported.

    python3 benchmarks/bench_kernels.py [--streams N] [--repeat R]
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from duobot import _kernels_py, kernels
from duobot.phonostream import CorpusSpec, generate_corpus
from duobot.wakeword.detect import Algorithm
from duobot.wakeword.evaluate import default_models, make_spotter

NAMES = ("viterbi", "edit_distance", "approx_match", "chain_scores", "loop_scores", "lexicon_search")
THRESHOLDS = {Algorithm.PHONETIC: 1.0, Algorithm.HMM: 20.0, Algorithm.LM: -0.1}


def record_calls(n_streams: int, seed: int) -> dict[str, list[tuple]]:
    """Run every detector with the kernel entry points wrapped to log their arguments."""
    calls: dict[str, list[tuple]] = {n: [] for n in NAMES}
    originals = {n: getattr(kernels, n) for n in NAMES}

    def wrap(name):
        def f(*args):
            calls[name].append(args)
            return originals[name](*args)
        return f

    k = n_streams // 3
    corpus = generate_corpus(CorpusSpec(n_streams - 2 * k, k, k), 0.6, seed)
    models = default_models()
    try:
        for n in NAMES:
            setattr(kernels, n, wrap(n))
        for alg in Algorithm:
            spot = make_spotter(alg, THRESHOLDS[alg], models)
            for s in corpus:
                spot(s)
    finally:
        for n, f in originals.items():
            setattr(kernels, n, f)
    return calls


def same(a, b) -> bool:
    if isinstance(a, tuple | list):
        return len(a) == len(b) and all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), atol=1e-9, equal_nan=True)
    if isinstance(a, float) or isinstance(b, float):
        return a == b or abs(a - b) <= 1e-9
    return a == b


def timed(fn, args_list, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for args in args_list:
            fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--streams", type=int, default=30)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=1)
    a = p.parse_args(argv)

    try:
        from duobot import _kernels as compiled
    except ImportError:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1
    calls = record_calls(a.streams, a.seed)
    print(f"active backend: {kernels.BACKEND}; {a.streams} streams, best of {a.repeat}")
    print(f"{'kernel':<15} {'calls':>6} {'cython ms':>10} {'python ms':>10} {'speedup':>8}")
    tot_c = tot_p = 0.0
    for name in NAMES:
        args_list = calls[name]
        if not args_list:
            continue
        fc, fp = getattr(compiled, name), getattr(_kernels_py, name)
        for args in args_list[:50]:
            if not same(fc(*args), fp(*args)):
                print(f"{name}: backends disagree", file=sys.stderr)
                return 2
        tc, tp = timed(fc, args_list, a.repeat), timed(fp, args_list, a.repeat)
        tot_c += tc
        tot_p += tp
        print(f"{name:<15} {len(args_list):>6} {1e3 * tc:>10.1f} {1e3 * tp:>10.1f} {tp / tc:>7.1f}x")
    print(f"{'total':<15} {'':>6} {1e3 * tot_c:>10.1f} {1e3 * tot_p:>10.1f} {tot_p / tot_c:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
