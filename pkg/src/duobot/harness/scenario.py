"""Scenarios: timed stimuli for a simulated run.

A scenario file is JSON::

    {"format": "duobot-scenario", "version": 1, "name": "...",
     "topology": "dual", "seed": 7,
     "timeline": [
        {"t_ms": 1000, "say": "marhaba ya rashid show map"},
        {"t_ms": 9000, "face": {"yaw": 6.0, "pitch": 0.0}},
        {"t_ms": 12000, "fault": "camera unplugged"}]}

``say`` entries become acoustic streams. Lexicon words use their own
pronunciation; any other word is voiced as a carrier word picked by a hash
of its spelling, so the acoustics stay inside the detectors' lexicon while
the recognizer still sees the real words. Utterance times are rounded to
the 10 ms frame grid.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from ..phonostream import (FRAME_PERIOD_MS, KEYWORD_TOKENS, PHONEME_FRAMES, SIL, AcousticStream,
                           Label, UtteranceScript, Word, load_lexicon, synthesize_stream)

SCENARIO_FORMAT = "duobot-scenario"
LEAD_SIL_FRAMES = 20
TRAIL_SIL_FRAMES = 40


class ScenarioError(ValueError):
    pass


class StimulusKind(str, Enum):
    SAY = "say"
    FACE = "face"
    FAULT = "fault"


@dataclass(frozen=True)
class Stimulus:
    t_ms: int
    kind: StimulusKind
    text: str = ""                 # utterance words, or the fault description
    yaw: float = 0.0
    pitch: float = 0.0

    def to_dict(self) -> dict:
        if self.kind is StimulusKind.FACE:
            return {"t_ms": self.t_ms, "face": {"yaw": self.yaw, "pitch": self.pitch}}
        return {"t_ms": self.t_ms, self.kind.value: self.text}


@dataclass
class Scenario:
    name: str
    timeline: list[Stimulus]
    topology: str = "dual"
    seed: int = 0
    source: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        times = [s.t_ms for s in self.timeline]
        if times != sorted(times):
            raise ScenarioError("timeline must be sorted by t_ms")
        if any(t < 0 for t in times):
            raise ScenarioError("stimulus times must be >= 0")

    @property
    def utterances(self) -> list[Stimulus]:
        return [s for s in self.timeline if s.kind is StimulusKind.SAY]

    def to_dict(self) -> dict:
        return {"format": SCENARIO_FORMAT, "version": 1, "name": self.name, "topology": self.topology,
                "seed": self.seed, "timeline": [s.to_dict() for s in self.timeline]}

    @classmethod
    def from_dict(cls, d: dict, source: Path | None = None) -> "Scenario":
        if d.get("format") != SCENARIO_FORMAT:
            raise ScenarioError("not a duobot scenario file")
        timeline = []
        for e in d.get("timeline", []):
            t = int(e["t_ms"])
            if "say" in e:
                timeline.append(Stimulus(t, StimulusKind.SAY, str(e["say"])))
            elif "face" in e:
                timeline.append(Stimulus(t, StimulusKind.FACE, yaw=float(e["face"]["yaw"]),
                                         pitch=float(e["face"].get("pitch", 0.0))))
            elif "fault" in e:
                timeline.append(Stimulus(t, StimulusKind.FAULT, str(e["fault"])))
            else:
                raise ScenarioError(f"stimulus at {t} ms has no say/face/fault entry")
        return cls(d.get("name", ""), timeline, d.get("topology", "dual"), int(d.get("seed", 0)), source)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario file; a bare name such as ``reference`` selects a shipped one."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and "/" not in str(path):
        try:
            text = resources.files("duobot.data").joinpath(f"scenarios/{path}.json").read_text()
        except FileNotFoundError:
            raise ScenarioError(f"no scenario named {path!r}") from None
        return Scenario.from_dict(json.loads(text))
    if not p.exists():
        raise ScenarioError(f"scenario file {path} not found")
    return Scenario.from_dict(json.loads(p.read_text()), p)


def pronounce(token: str, lexicon: dict[str, tuple[str, ...]],
              carriers: Sequence[str]) -> tuple[str, ...]:
    """Lexicon pronunciation, or that of a carrier chosen by a stable hash of the token."""
    if token in lexicon:
        return lexicon[token]
    if not carriers:
        raise ScenarioError(f"cannot pronounce {token!r}")
    return lexicon[carriers[zlib.crc32(token.encode()) % len(carriers)]]


@dataclass(frozen=True)
class Utterance:
    index: int
    start_ms: int
    stream: AcousticStream
    command: tuple[str, ...]       # words after the wake phrase (all words if none)

    @property
    def start_frame(self) -> int:
        return self.start_ms // FRAME_PERIOD_MS

    @property
    def keyword_end_ms(self) -> int | None:
        k = self.stream.keyword_end_ms
        return None if k is None else self.start_ms + k


def _find_keyword(tokens: Sequence[str]) -> int | None:
    n = len(KEYWORD_TOKENS)
    for i in range(len(tokens) - n + 1):
        if tuple(tokens[i:i + n]) == KEYWORD_TOKENS:
            return i
    return None


def build_utterance(index: int, stim: Stimulus, seed: int, noise: float) -> Utterance:
    """Deterministic acoustic rendering of one ``say`` stimulus."""
    tokens = stim.text.split()
    if not tokens:
        raise ScenarioError(f"empty utterance at {stim.t_ms} ms")
    entries = load_lexicon()
    lexicon = {e.token: e.phonemes for e in entries}
    carriers = [e.token for e in entries if e.cls == "CARRIER"]
    ss = np.random.SeedSequence([seed, 1, index])
    rng = np.random.default_rng(ss.spawn(1)[0])
    lo, hi = PHONEME_FRAMES
    words = [Word("<sil>", (SIL,), (LEAD_SIL_FRAMES,))]
    for t in tokens:
        ph = pronounce(t, lexicon, carriers)
        words.append(Word(t, ph, tuple(int(d) for d in rng.integers(lo, hi + 1, size=len(ph)))))
    words.append(Word("<sil>", (SIL,), (TRAIL_SIL_FRAMES,)))
    at = _find_keyword(tokens)
    if at is None:
        script = UtteranceScript(tuple(words), Label.NEGATIVE)
        command = tuple(tokens)
    else:
        script = UtteranceScript(tuple(words), Label.POSITIVE,
                                 target_span=(at + 1, at + len(KEYWORD_TOKENS)))
        command = tuple(tokens[at + len(KEYWORD_TOKENS):])
    script.validate()
    start = (stim.t_ms // FRAME_PERIOD_MS) * FRAME_PERIOD_MS
    stream = synthesize_stream(script, noise, int(ss.generate_state(1)[0]))
    return Utterance(index, start, stream, command)


def build_utterances(scenario: Scenario, noise: float) -> list[Utterance]:
    out = [build_utterance(i, s, scenario.seed, noise) for i, s in enumerate(scenario.utterances)]
    for a, b in zip(out, out[1:]):
        if a.start_ms + a.stream.duration_ms > b.start_ms:
            raise ScenarioError(f"utterance {b.index} at {b.start_ms} ms overlaps the previous one")
    return out
