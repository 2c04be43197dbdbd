"""Kernel backend selection.

The compiled Cython extension is used when it imports; otherwise the
numpy/pure-Python versions are used. Set ``DUOBOT_PURE=1`` to force the
fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("DUOBOT_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

viterbi = _impl.viterbi
edit_distance = _impl.edit_distance
approx_match = _impl.approx_match
chain_scores = _impl.chain_scores
loop_scores = _impl.loop_scores
lexicon_search = _impl.lexicon_search

__all__ = ["BACKEND", "viterbi", "edit_distance", "approx_match", "chain_scores",
           "loop_scores", "lexicon_search"]
