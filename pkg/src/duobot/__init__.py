"""Two-device humanoid robot runtime and simulator.

Wake-word spotting, a dialog loop with interrupt, servo motion, eye
signals and a form backend, run as message-passing nodes over a
deterministic fabric.
"""

__version__ = "0.1.0"
