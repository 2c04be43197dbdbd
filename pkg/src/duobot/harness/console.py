"""Interactive text console over the simulated robot.

Each command appends a stimulus to a growing scenario timeline, then the
whole timeline is replayed up to the console clock. Runs are deterministic,
so replaying reproduces earlier output exactly and only the new trace
records are printed. Scripted and interactive runs share one code path.

Commands::

    say <words...>        speak at the current time, then advance 6 s
    face <yaw> [pitch]    show a face offset (degrees)
    fault <text...>       inject a fault
    wait <ms>             advance the clock
    state                 print dialog phase and eye state
    help | quit
"""

from __future__ import annotations

from typing import Callable, Iterable, TextIO

from ..fabric import Topology
from .config import RunConfig, default_config
from .runner import boot
from .scenario import Scenario, ScenarioError, Stimulus, StimulusKind

SAY_ADVANCE_MS = 6000

_SHOWN = ("dialog", "speech", "eye", "gesture", "motion_error", "settle", "face_estimate", "error")


def describe(rec: dict) -> str | None:
    ev = rec["ev"]
    t = f"{rec['t']:10.1f}"
    if ev == "dialog":
        if rec["to"] is None:
            return f"{t}  dialog  {rec['event']} rejected in {rec['from']}: {rec['reason']}"
        return f"{t}  dialog  {rec['from']} --{rec['event']}--> {rec['to']}"
    if ev == "speech":
        return f"{t}  robot   \"{rec['text']}\""
    if ev == "eye":
        return f"{t}  eyes    {rec['state']}" + ("" if rec["ok"] else f" (rejected {rec['op']})")
    if ev == "gesture":
        return f"{t}  motion  {rec['name']} until {rec['end']:.0f}"
    if ev == "settle":
        return f"{t}  motion  tracked {rec['step']:+.1f} deg, settled in {rec['settle_ms']} ms"
    if ev == "deliver" and rec["topic"] == "TRANSCRIPT_READY":
        return None
    if ev in _SHOWN:
        rest = {k: v for k, v in rec.items() if k not in ("t", "ev")}
        return f"{t}  {ev}  {rest}"
    return None


class Console:
    def __init__(self, topology: Topology | str = "dual", config: RunConfig | None = None, seed: int = 0,
                 out: Callable[[str], None] = print):
        self.topology = topology
        self.config = config or default_config()
        self.seed = seed
        self.out = out
        self.timeline: list[Stimulus] = []
        self.clock = 0
        self.n_shown = 0
        self.run = None

    def _replay(self) -> None:
        sc = Scenario("console", list(self.timeline), seed=self.seed)
        run = boot(sc, self.topology, self.config)
        run.sim.run_until(self.clock)
        self.run = run
        new = run.sim.trace[self.n_shown:]
        self.n_shown = len(run.sim.trace)
        for r in new:
            line = describe(r)
            if line:
                self.out(line)

    def command(self, line: str) -> bool:
        """Handle one line; returns False on ``quit``."""
        parts = line.split()
        if not parts:
            return True
        cmd, args = parts[0].lower(), parts[1:]
        try:
            if cmd in ("quit", "exit"):
                return False
            if cmd == "help":
                self.out(__doc__.split("Commands::")[1].rstrip())
            elif cmd == "say":
                if not args:
                    raise ScenarioError("say needs words")
                self.timeline.append(Stimulus(self.clock, StimulusKind.SAY, " ".join(args)))
                self.clock += SAY_ADVANCE_MS
                self._replay()
            elif cmd == "face":
                yaw = float(args[0])
                pitch = float(args[1]) if len(args) > 1 else 0.0
                self.timeline.append(Stimulus(self.clock, StimulusKind.FACE, yaw=yaw, pitch=pitch))
                self._replay()
            elif cmd == "fault":
                self.timeline.append(Stimulus(self.clock, StimulusKind.FAULT, " ".join(args) or "fault"))
                self._replay()
            elif cmd == "wait":
                self.clock += int(args[0])
                self._replay()
            elif cmd == "state":
                if self.run is None:
                    self.out("IDLE  BLUE NONE")
                else:
                    n = self.run.nodes
                    self.out(f"{n['dialog'].state.phase.value}  {n['eyes'].display.state}")
            else:
                self.out(f"unknown command {cmd!r}; type help")
        except (IndexError, ValueError) as exc:
            self.out(f"error: {exc}")
        return True

    def loop(self, lines: Iterable[str], prompt: TextIO | None = None) -> None:
        for line in lines:
            if not self.command(line.strip()):
                break
            if prompt is not None:
                prompt.write("> ")
                prompt.flush()
