"""Eye display state machine: attention colors and status icons.

The transitions live in a shipped data file (``eye_transitions.tsv``) so the
implementation and the tests read the same table.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path


class Color(str, Enum):
    BLUE = "BLUE"
    GREEN = "GREEN"
    RED = "RED"


class Icon(str, Enum):
    NONE = "NONE"
    CLOCK = "CLOCK"
    MAP = "MAP"
    CAMERA = "CAMERA"


class EyeEvent(str, Enum):
    WAKE_DETECTED = "WAKE_DETECTED"
    STOP_LISTENING = "STOP_LISTENING"
    ERROR = "ERROR"
    WAIT_BEGIN = "WAIT_BEGIN"
    WAIT_END = "WAIT_END"
    SHOW_MAP = "SHOW_MAP"
    HIDE_MAP = "HIDE_MAP"
    PHOTO_BEGIN = "PHOTO_BEGIN"
    PHOTO_END = "PHOTO_END"
    ERROR_CLEARED = "ERROR_CLEARED"


@dataclass(frozen=True)
class EyeState:
    color: Color = Color.BLUE
    icon: Icon = Icon.NONE

    def __str__(self) -> str:
        return f"{self.color.value} {self.icon.value}"


@dataclass(frozen=True)
class EyeRejection:
    state: EyeState
    event: EyeEvent


TransitionTable = dict[tuple[EyeState, EyeEvent], EyeState | None]


def load_table(path: str | Path | None = None) -> TransitionTable:
    """Parse the tab-separated table; ``None`` marks a rejected pair."""
    if path is None:
        text = resources.files("duobot.data").joinpath("eye_transitions.tsv").read_text()
    else:
        text = Path(path).read_text()
    table: TransitionTable = {}
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        c, i, e, nc, ni = line.split("\t")
        key = (EyeState(Color(c), Icon(i)), EyeEvent(e))
        if key in table:
            raise ValueError(f"line {n}: duplicate entry for {c} {i} {e}")
        table[key] = None if nc == "REJECT" else EyeState(Color(nc), Icon(ni))
    missing = len(Color) * len(Icon) * len(EyeEvent) - len(table)
    if missing:
        raise ValueError(f"eye table is missing {missing} (state, event) pairs")
    return table


_TABLE: TransitionTable | None = None


def default_table() -> TransitionTable:
    global _TABLE
    if _TABLE is None:
        _TABLE = load_table()
    return _TABLE


def apply_event(state: EyeState, event: EyeEvent,
                table: TransitionTable | None = None) -> EyeState | EyeRejection:
    nxt = (table or default_table())[(state, EyeEvent(event))]
    return EyeRejection(state, EyeEvent(event)) if nxt is None else nxt


class EyeDisplay:
    """Stateful wrapper that keeps the state-change log (``t_ms color icon``)."""

    def __init__(self, state: EyeState | None = None, table: TransitionTable | None = None):
        self.state = state or EyeState()
        self.table = table or default_table()
        self.log: list[str] = []
        self.rejections: list[tuple[int, EyeRejection]] = []

    def handle(self, t_ms: int, event: EyeEvent) -> bool:
        out = apply_event(self.state, event, self.table)
        if isinstance(out, EyeRejection):
            self.rejections.append((t_ms, out))
            return False
        if out != self.state:
            self.log.append(f"{t_ms} {out}")
        self.state = out
        return True
