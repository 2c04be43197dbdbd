"""Message fabric and device model.

A deterministic discrete-event simulator: one logical clock, one global event
queue ordered by ``(time, sequence)``. Nodes live on devices; each device
runs the frames of its co-located loops from a single FIFO queue at its
capacity, which is what makes co-location slow. Links between devices add a
base latency plus uniform jitter drawn from the run's seed.

Times are milliseconds (floats). Trace records are plain dicts written as
newline-delimited JSON with sorted keys, so equal seeds give equal bytes.
"""

from __future__ import annotations

import asyncio
import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol, Sequence

import numpy as np

DEFAULT_JITTER_MS = 3.0
WAKE_TOPIC = "WAKE_DETECTED"
KEYWORD_END_MARK = "keyword_end"
# heap events that produce exactly one trace record each
PROCESSED_KINDS = ("deliver", "job", "timer")


class Loop(str, Enum):
    WAKEWORD = "WAKEWORD"
    LVCSR = "LVCSR"
    DIALOG = "DIALOG"
    VISION = "VISION"

    @property
    def node(self) -> str:
        return self.value.lower()


class FabricError(Exception):
    pass


@dataclass(frozen=True)
class Message:
    src: str
    dst: str
    topic: str
    payload: bytes
    t_ms: float
    seq: int

    @staticmethod
    def encode(obj: Any) -> bytes:
        return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()

    def data(self) -> Any:
        return json.loads(self.payload) if self.payload else None

    def to_dict(self) -> dict:
        return {"src": self.src, "dst": self.dst, "topic": self.topic, "seq": self.seq,
                "t_ms": self.t_ms, "payload": self.payload.decode()}

    @classmethod
    def from_dict(cls, d: dict) -> "Message":
        return cls(d["src"], d["dst"], d["topic"], d["payload"].encode(), d["t_ms"], d["seq"])


@dataclass(frozen=True)
class RoutingError:
    """Returned to the sender instead of a scheduled delivery."""
    src: str
    dst: str
    topic: str
    t_ms: float
    reason: str


@dataclass(frozen=True)
class Device:
    name: str
    capacity: float       # work units per ms

    def __post_init__(self):
        if not self.capacity > 0:
            raise FabricError(f"device {self.name}: capacity must be > 0")


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    base_ms: float
    jitter_ms: float = DEFAULT_JITTER_MS

    def __post_init__(self):
        if self.base_ms < 0 or self.jitter_ms < 0:
            raise FabricError(f"link {self.a}-{self.b}: latency and jitter must be >= 0")


@dataclass
class Topology:
    """Devices, the loop placement map, hosts for the other nodes, and links."""

    name: str
    devices: dict[str, Device]
    placement: dict[Loop, str]
    links: list[Link] = field(default_factory=list)
    hosts: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        missing = [l.value for l in Loop if l not in self.placement]
        if missing:
            raise FabricError(f"topology {self.name}: loops not placed: {missing}")
        for where in list(self.placement.values()) + list(self.hosts.values()):
            if where not in self.devices:
                raise FabricError(f"topology {self.name}: unknown device {where!r}")
        self._links = {}
        for ln in self.links:
            for d in (ln.a, ln.b):
                if d not in self.devices:
                    raise FabricError(f"topology {self.name}: link to unknown device {d!r}")
            self._links[frozenset((ln.a, ln.b))] = ln

    def device_of(self, node: str) -> str | None:
        for loop, dev in self.placement.items():
            if loop.node == node:
                return dev
        return self.hosts.get(node)

    def link(self, a: str, b: str) -> Link | None:
        if a == b:
            return Link(a, b, 0.0, 0.0)        # loopback
        return self._links.get(frozenset((a, b)))

    def loops_on(self, device: str) -> list[Loop]:
        return [l for l in Loop if self.placement[l] == device]

    def with_placement(self, **moves: str) -> "Topology":
        placement = dict(self.placement)
        for loop, dev in moves.items():
            placement[Loop(loop)] = dev
        return Topology(self.name, dict(self.devices), placement, list(self.links), dict(self.hosts))

    def to_dict(self) -> dict:
        return {
            "format": "duobot-topology", "version": 1, "name": self.name,
            "devices": [{"name": d.name, "capacity": d.capacity} for d in self.devices.values()],
            "placement": {l.value: self.placement[l] for l in Loop},
            "hosts": dict(sorted(self.hosts.items())),
            "links": [{"a": l.a, "b": l.b, "base_ms": l.base_ms, "jitter_ms": l.jitter_ms}
                      for l in self.links],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Topology":
        if d.get("format") != "duobot-topology":
            raise FabricError("not a duobot topology file")
        devices = {x["name"]: Device(x["name"], float(x["capacity"])) for x in d["devices"]}
        placement = {Loop(k): v for k, v in d["placement"].items()}
        links = [Link(x["a"], x["b"], float(x["base_ms"]), float(x.get("jitter_ms", DEFAULT_JITTER_MS)))
                 for x in d.get("links", [])]
        return cls(d.get("name", ""), devices, placement, links, dict(d.get("hosts", {})))


def load_topology(path: str | Path) -> Topology:
    """Load a topology file; a bare name such as ``dual`` selects a shipped one."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and "/" not in str(path):
        text = resources.files("duobot.data").joinpath(f"topologies/{path}.json").read_text()
    else:
        text = p.read_text()
    return Topology.from_dict(json.loads(text))


@dataclass(frozen=True)
class ContentionModel:
    """Per-loop cost of one frame, in work units.

    WAKEWORD and LVCSR frames are 10 ms audio frames, delivered to their
    device in buffers of ``buffer_frames``; a VISION frame is one camera
    frame every ``vision_period_ms``; a DIALOG frame is one handled event.
    """
    frame_cost: dict[Loop, float]
    buffer_frames: int = 10
    vision_period_ms: float = 100.0

    def __post_init__(self):
        if any(c < 0 for c in self.frame_cost.values()):
            raise FabricError("frame costs must be >= 0")
        if self.buffer_frames < 1:
            raise FabricError("buffer_frames must be >= 1")

    def cost(self, loop: Loop, frames: int = 1) -> float:
        return self.frame_cost.get(loop, 0.0) * frames

    def to_dict(self) -> dict:
        return {"frame_cost": {l.value: self.frame_cost.get(l, 0.0) for l in Loop},
                "buffer_frames": self.buffer_frames, "vision_period_ms": self.vision_period_ms}

    @classmethod
    def from_dict(cls, d: dict) -> "ContentionModel":
        return cls({Loop(k): float(v) for k, v in d["frame_cost"].items()},
                   int(d.get("buffer_frames", 10)), float(d.get("vision_period_ms", 100.0)))


class Node(Protocol):
    name: str

    def on_message(self, sim: "Simulator", msg: Message) -> None: ...


@dataclass
class _Job:
    loop: Loop
    units: float
    tag: str
    on_done: Callable[["Simulator"], None] | None
    submitted: float


@dataclass
class _DeviceQueue:
    device: Device
    queue: deque = field(default_factory=deque)
    busy: bool = False


def _r(x: float) -> float:
    return round(x, 6)


class Simulator:
    """Single-threaded event loop driving all nodes on one logical clock."""

    def __init__(self, topology: Topology, seed: int = 0, contention: ContentionModel | None = None):
        self.topology = topology
        self.contention = contention or ContentionModel({})
        self.rng = np.random.default_rng(seed)
        self.now = 0.0
        self.nodes: dict[str, Node] = {}
        self.trace: list[dict] = []
        self._heap: list[tuple[float, int, str, Any]] = []
        self._seq = 0
        self._pair_seq: dict[tuple[str, str], int] = {}
        self._pair_last: dict[tuple[str, str], float] = {}
        self._cancelled: set[int] = set()
        self._devices = {n: _DeviceQueue(d) for n, d in topology.devices.items()}
        self.n_scheduled = 0
        self.n_processed = 0

    # -- setup

    def add_node(self, node: Node) -> None:
        if self.topology.device_of(node.name) is None:
            raise FabricError(f"node {node.name!r} has no device in topology {self.topology.name}")
        self.nodes[node.name] = node

    def device_of(self, node: str) -> str:
        dev = self.topology.device_of(node)
        if dev is None:
            raise FabricError(f"node {node!r} has no device")
        return dev

    # -- scheduling

    def _push(self, t: float, kind: str, data: Any) -> int:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, data))
        self.n_scheduled += 1
        return self._seq

    def record(self, rec: dict) -> None:
        rec = dict(rec)
        rec.setdefault("t", _r(self.now))
        self.trace.append(rec)

    def send(self, src: str, dst: str, topic: str, payload: Any = None) -> Message | RoutingError:
        """Schedule delivery at now + base latency + jitter, FIFO per (src, dst)."""
        body = payload if isinstance(payload, bytes) else (b"" if payload is None else Message.encode(payload))
        sdev = self.topology.device_of(src)
        ddev = self.topology.device_of(dst) if dst in self.nodes else None
        link = self.topology.link(sdev, ddev) if sdev and ddev else None
        if link is None:
            reason = f"unknown node {dst!r}" if ddev is None else f"no link {sdev}-{ddev}"
            err = RoutingError(src, dst, topic, self.now, reason)
            self.record({"ev": "error", "src": src, "dst": dst, "topic": topic, "reason": reason})
            return err
        pair = (src, dst)
        seq = self._pair_seq.get(pair, 0) + 1
        self._pair_seq[pair] = seq
        msg = Message(src, dst, topic, body, _r(self.now), seq)
        jitter = float(self.rng.uniform(0.0, link.jitter_ms)) if link.jitter_ms > 0 else 0.0
        t = _r(max(self.now + link.base_ms + jitter, self._pair_last.get(pair, 0.0)))
        self._pair_last[pair] = t
        self.record({"ev": "send", "src": src, "dst": dst, "topic": topic, "seq": seq,
                     "at": t, "payload": body.decode()})
        self._push(t, "deliver", msg)
        return msg

    def call_at(self, t: float, name: str, fn: Callable[["Simulator"], None]) -> int:
        """Run ``fn`` at time ``t`` (not earlier than now); returns a timer id."""
        return self._push(max(_r(t), self.now), "timer", (name, fn))

    def cancel(self, timer_id: int) -> None:
        self._cancelled.add(timer_id)

    def submit(self, node: str, loop: Loop, frames: int, on_done: Callable[["Simulator"], None] | None,
               tag: str = "") -> None:
        """Queue ``frames`` frames of ``loop`` on the node's device."""
        dq = self._devices[self.device_of(node)]
        dq.queue.append(_Job(loop, self.contention.cost(loop, frames), tag, on_done, self.now))
        if not dq.busy:
            self._start(dq)

    def _start(self, dq: _DeviceQueue) -> None:
        job = dq.queue[0]
        dq.busy = True
        self._push(_r(self.now + job.units / dq.device.capacity), "job", (dq, job, self.now))

    # -- main loop

    def pending(self) -> int:
        return len(self._heap)

    def run_until(self, t_end: float) -> list[dict]:
        """Process every event with time <= ``t_end``; returns the records added."""
        first = len(self.trace)
        while self._heap and self._heap[0][0] <= t_end:
            t, seq, kind, data = heapq.heappop(self._heap)
            if seq in self._cancelled:
                self._cancelled.discard(seq)
                continue
            self.now = t
            self.n_processed += 1
            if kind == "deliver":
                msg: Message = data
                self.record({"ev": "deliver", "src": msg.src, "dst": msg.dst, "topic": msg.topic,
                             "seq": msg.seq, "sent": msg.t_ms, "payload": msg.payload.decode()})
                self.nodes[msg.dst].on_message(self, msg)
            elif kind == "timer":
                name, fn = data
                self.record({"ev": "timer", "name": name})
                fn(self)
            else:
                dq, job, start = data
                dq.queue.popleft()
                dq.busy = False
                self.record({"ev": "job", "device": dq.device.name, "loop": job.loop.value,
                             "tag": job.tag, "queued": _r(job.submitted), "start": _r(start)})
                if dq.queue:
                    self._start(dq)
                if job.on_done is not None:
                    job.on_done(self)
        self.now = max(self.now, t_end) if math.isfinite(t_end) else self.now
        return self.trace[first:]


# --------------------------------------------------------------------------
# trace files and latency


def dump_trace(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records)


def write_trace(path: str | Path, records: Iterable[dict]) -> None:
    Path(path).write_text(dump_trace(records))


def read_trace(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


@dataclass(frozen=True)
class LatencyStats:
    n: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    max_ms: float
    n_missed: int = 0

    def to_dict(self) -> dict:
        return {"n": self.n, "mean_ms": self.mean_ms, "median_ms": self.median_ms,
                "p95_ms": self.p95_ms, "max_ms": self.max_ms, "n_missed": self.n_missed}


def wake_latencies(trace: Sequence[dict], dialog_node: str = "dialog") -> tuple[list[float], int]:
    """Per-utterance latency: first WAKE_DETECTED receipt at the dialog node minus keyword end.

    Returns the latencies and the number of keyword ends without a detection.
    """
    ends: dict[int, float] = {}
    got: dict[int, float] = {}
    for r in trace:
        if r["ev"] == "mark" and r.get("name") == KEYWORD_END_MARK:
            ends[r["utt"]] = r["t"]
        elif r["ev"] == "deliver" and r["topic"] == WAKE_TOPIC and r["dst"] == dialog_node:
            utt = json.loads(r["payload"])["utt"]
            if utt in ends and utt not in got:
                got[utt] = r["t"]
    lat = [round(got[u] - ends[u], 6) for u in sorted(got)]
    return lat, len(ends) - len(got)


def latency_stats(values: Sequence[float], n_missed: int = 0) -> LatencyStats | None:
    if not values:
        return None
    a = np.asarray(values, dtype=float)
    return LatencyStats(len(a), round(float(a.mean()), 6), round(float(np.median(a)), 6),
                        round(float(np.percentile(a, 95)), 6), round(float(a.max()), 6), n_missed)


def measure_wake_latency(trace: Sequence[dict], dialog_node: str = "dialog") -> LatencyStats | None:
    """Mean/median/p95 wake latency; ``None`` when the trace holds no detected keyword."""
    lat, missed = wake_latencies(trace, dialog_node)
    return latency_stats(lat, missed)


# --------------------------------------------------------------------------
# optional real-socket transport


class SocketTransport:
    """Delivers the same :class:`Message` envelopes over TCP between asyncio loops.

    Each message travels as one frame: a 4-byte big-endian length, then the
    JSON form of the message. Sequence numbers are assigned per (src, dst)
    by the sending side, as in the simulator.
    """

    def __init__(self, addresses: dict[str, tuple[str, int]]):
        self.addresses = addresses
        self._seq: dict[tuple[str, str], int] = {}
        self._writers: dict[str, asyncio.StreamWriter] = {}

    @staticmethod
    def frame(msg: Message) -> bytes:
        body = json.dumps(msg.to_dict(), sort_keys=True).encode()
        return len(body).to_bytes(4, "big") + body

    async def send(self, src: str, dst: str, topic: str, payload: Any, t_ms: float) -> Message | RoutingError:
        if dst not in self.addresses:
            return RoutingError(src, dst, topic, t_ms, f"unknown node {dst!r}")
        pair = (src, dst)
        self._seq[pair] = self._seq.get(pair, 0) + 1
        body = payload if isinstance(payload, bytes) else Message.encode(payload)
        msg = Message(src, dst, topic, body, t_ms, self._seq[pair])
        w = self._writers.get(dst)
        if w is None:
            _, w = await asyncio.open_connection(*self.addresses[dst])
            self._writers[dst] = w
        w.write(self.frame(msg))
        await w.drain()
        return msg

    async def close(self) -> None:
        for w in self._writers.values():
            w.close()
        self._writers.clear()

    @staticmethod
    async def serve(host: str, port: int, handler: Callable[[Message], Any],
                    ready: asyncio.Event | None = None) -> None:
        """Receive messages until cancelled, handing each to ``handler`` in arrival order."""

        async def client(reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
            try:
                while True:
                    n = int.from_bytes(await reader.readexactly(4), "big")
                    msg = Message.from_dict(json.loads(await reader.readexactly(n)))
                    res = handler(msg)
                    if asyncio.iscoroutine(res):
                        await res
            except asyncio.IncompleteReadError:
                pass
            writer.close()

        server = await asyncio.start_server(client, host, port)
        async with server:
            if ready is not None:
                ready.set()
            await server.serve_forever()
