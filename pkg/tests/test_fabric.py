"""Discrete-event fabric: delivery, ordering, contention and latency."""

from __future__ import annotations

import asyncio
import socket

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duobot.fabric import (PROCESSED_KINDS, ContentionModel, Device, FabricError, Link, Loop, Message,
                           RoutingError, SocketTransport, Simulator, Topology, dump_trace, latency_stats,
                           load_topology, measure_wake_latency, read_trace, wake_latencies, write_trace)
from duobot.harness.config import RunConfig
from duobot.harness.runner import run_scenario
from duobot.phonostream import FRAME_PERIOD_MS


class Sink:
    def __init__(self, name: str):
        self.name = name
        self.got: list[tuple[float, Message]] = []

    def on_message(self, sim, msg):
        self.got.append((sim.now, msg))


def two_devices(base: float = 5.0, jitter: float = 0.0, capacity: float = 1.0) -> Topology:
    devs = {"a": Device("a", capacity), "b": Device("b", capacity)}
    placement = {Loop.WAKEWORD: "a", Loop.VISION: "a", Loop.LVCSR: "b", Loop.DIALOG: "b"}
    return Topology("t", devs, placement, [Link("a", "b", base, jitter)], {"x": "a", "y": "b"})


def sim_with_sinks(topo: Topology, seed: int = 0, contention=None) -> tuple[Simulator, Sink, Sink]:
    sim = Simulator(topo, seed, contention)
    x, y = Sink("x"), Sink("y")
    sim.add_node(x)
    sim.add_node(y)
    return sim, x, y


def test_fixed_latency_delivery():
    sim, _, y = sim_with_sinks(two_devices(5.0, 0.0))
    sim.call_at(7.0, "go", lambda s: s.send("x", "y", "T", {"k": 1}))
    sim.run_until(100)
    assert [(t, m.data()) for t, m in y.got] == [(12.0, {"k": 1})]
    assert y.got[0][1].t_ms == 7.0


def test_fifo_under_jitter():
    sim, _, y = sim_with_sinks(two_devices(1.0, 20.0), seed=3)
    for i in range(200):
        sim.call_at(i * 0.5, "go", lambda s, i=i: s.send("x", "y", "T", i))
    sim.run_until(10_000)
    assert [m.data() for _, m in y.got] == list(range(200))
    assert [m.seq for _, m in y.got] == list(range(1, 201))
    assert all(t >= m.t_ms for t, m in y.got)


def deliveries(seed: int) -> list[float]:
    sim, _, y = sim_with_sinks(two_devices(5.0, 2.0), seed=seed)
    for i in range(1000):
        sim.call_at(i * 3.0, "go", lambda s, i=i: s.send("x", "y", "T", i))
    sim.run_until(1e9)
    return [t for t, _ in y.got]


def test_jitter_is_deterministic():
    a, b = deliveries(8), deliveries(8)
    assert len(a) == 1000 and a == b
    assert a != deliveries(9)


def test_empty_queue_gives_empty_trace():
    sim = Simulator(two_devices())
    assert sim.run_until(1000) == [] and sim.trace == []


def test_unknown_node_is_routing_error():
    sim, x, _ = sim_with_sinks(two_devices())
    out = sim.send("x", "nobody", "T", 1)
    assert isinstance(out, RoutingError) and "nobody" in out.reason
    assert sim.pending() == 0
    assert sim.trace[-1]["ev"] == "error"


def test_missing_link_is_routing_error():
    topo = two_devices()
    topo = Topology("t", topo.devices, topo.placement, [], topo.hosts)
    sim, _, _ = sim_with_sinks(topo)
    assert isinstance(sim.send("x", "y", "T"), RoutingError)
    # same device needs no link
    assert isinstance(sim.send("x", "x", "T"), Message)


def test_topology_validation():
    with pytest.raises(FabricError):
        Device("d", 0.0)
    with pytest.raises(FabricError):
        Link("a", "b", -1.0)
    t = two_devices()
    with pytest.raises(FabricError):
        Topology("t", t.devices, {Loop.WAKEWORD: "a"})
    with pytest.raises(FabricError):
        Topology("t", t.devices, {**t.placement, Loop.LVCSR: "zz"})


def test_topology_round_trip():
    for name in ("dual", "single"):
        t = load_topology(name)
        assert Topology.from_dict(t.to_dict()).to_dict() == t.to_dict()
    assert load_topology("single").placement[Loop.WAKEWORD] == load_topology("single").placement[Loop.LVCSR]
    dual = load_topology("dual")
    assert dual.placement[Loop.WAKEWORD] != dual.placement[Loop.LVCSR]


def test_trace_file_round_trip(tmp_path, dual_run):
    _, trace = dual_run
    write_trace(tmp_path / "t.jsonl", trace)
    assert read_trace(tmp_path / "t.jsonl") == trace
    assert (tmp_path / "t.jsonl").read_text() == dump_trace(trace)


def test_latency_needs_positives():
    assert measure_wake_latency([]) is None
    assert latency_stats([]) is None
    trace = [{"ev": "mark", "name": "keyword_end", "utt": 0, "t": 100.0}]
    assert wake_latencies(trace) == ([], 1)


# -- event counting


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["send", "bad", "timer", "job", "cancel"]),
                          st.floats(0, 500), st.integers(0, 30)), max_size=60),
       st.integers(0, 1000))
def test_event_count_oracle(ops, seed):
    cm = ContentionModel({Loop.WAKEWORD: 0.7, Loop.LVCSR: 1.3})
    sim, _, _ = sim_with_sinks(two_devices(2.0, 3.0), seed, cm)
    expected = 0
    timers = []
    errors = 0
    for op, t, n in ops:
        if op == "send":
            sim.call_at(t, "op", lambda s: s.send("x", "y", "T"))
            expected += 2                     # the timer and one delivery
        elif op == "bad":
            sim.call_at(t, "op", lambda s: s.send("x", "ghost", "T"))
            expected += 1
            errors += 1
        elif op == "timer":
            timers.append(sim.call_at(t, "op", lambda s: None))
            expected += 1
        elif op == "job":
            loop = Loop.WAKEWORD if n % 2 else Loop.LVCSR
            sim.call_at(t, "op", lambda s, loop=loop, n=n: s.submit("x", loop, n, None))
            expected += 2                     # the timer and the job
        elif timers:
            sim.cancel(timers.pop(n % len(timers)))
            expected -= 1
    trace = sim.run_until(1e9)
    assert sim.n_processed == expected
    assert sum(r["ev"] in PROCESSED_KINDS for r in trace) == expected
    assert sum(r["ev"] == "error" for r in trace) == errors
    assert sim.pending() == 0


# -- conservation and contention


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 100), st.sampled_from(["y", "x", "ghost"])), max_size=50),
       st.integers(0, 100))
def test_conservation(sends, seed):
    sim, x, y = sim_with_sinks(two_devices(4.0, 3.0), seed)
    results = []
    for t, dst in sends:
        sim.call_at(t, "op", lambda s, dst=dst: results.append(s.send("x", dst, "T")))
    sim.run_until(1e9)
    delivered = [m for _, m in x.got + y.got]
    sent = [r for r in results if isinstance(r, Message)]
    errors = [r for r in results if isinstance(r, RoutingError)]
    assert len(sent) + len(errors) == len(sends)
    assert sorted(delivered, key=lambda m: (m.dst, m.seq)) == sorted(sent, key=lambda m: (m.dst, m.seq))
    assert all(r.dst == "ghost" for r in errors)


def completion_times(jobs, extra, capacity=1.0) -> dict[int, float]:
    cm = ContentionModel({Loop.WAKEWORD: 1.0, Loop.LVCSR: 2.5})
    sim, _, _ = sim_with_sinks(two_devices(capacity=capacity), 0, cm)
    done: dict[int, float] = {}
    for i, (t, n) in enumerate(jobs):
        sim.call_at(t, "w", lambda s, i=i, n=n: s.submit(
            "x", Loop.WAKEWORD, n, lambda s2, i=i: done.__setitem__(i, s2.now)))
    for t, n in extra:
        sim.call_at(t, "l", lambda s, n=n: s.submit("x", Loop.LVCSR, n, None))
    sim.run_until(1e9)
    return done


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 200), st.integers(1, 10)), min_size=1, max_size=20),
       st.lists(st.tuples(st.floats(0, 200), st.integers(1, 10)), max_size=20))
def test_contention_monotone(jobs, extra):
    alone = completion_times(jobs, [])
    shared = completion_times(jobs, extra)
    assert set(alone) == set(shared)
    for i in alone:
        assert shared[i] >= alone[i]


def test_fifo_job_order_per_loop():
    cm = ContentionModel({Loop.WAKEWORD: 1.0, Loop.LVCSR: 3.0})
    sim, _, _ = sim_with_sinks(two_devices(), 0, cm)
    for i in range(20):
        loop = Loop.WAKEWORD if i % 3 else Loop.LVCSR
        sim.call_at(i * 0.5, "q", lambda s, loop=loop, i=i: s.submit("x", loop, 2, None, f"{i}"))
    trace = sim.run_until(1e9)
    for loop in Loop:
        tags = [int(r["tag"]) for r in trace if r["ev"] == "job" and r["loop"] == loop.value]
        assert tags == sorted(tags)


# -- latency


def free_topology(name: str) -> Topology:
    t = load_topology(name)
    links = [Link(l.a, l.b, 0.0, 0.0) for l in t.links]
    return Topology(t.name, t.devices, t.placement, links, t.hosts)


def closed_form(prepared, B: int, extra_ms: float = 0.0) -> list[float]:
    """Receipt at the end of the audio buffer holding each utterance's first decision frame."""
    out = []
    for u, dets in zip(prepared.utterances, prepared.detections):
        if u.keyword_end_ms is None or not dets:
            continue
        d = dets[0]
        f = u.start_frame + max(d.t_detect_ms // FRAME_PERIOD_MS - 1, 0)
        receipt = (f // B + 1) * B * FRAME_PERIOD_MS + extra_ms
        out.append(round(receipt - u.keyword_end_ms, 6))
    return out


def test_zero_cost_latency_is_buffer_drain(reference, reference_prepared, models):
    cfg = RunConfig()
    B = cfg.contention.buffer_frames
    _, trace = run_scenario(reference, free_topology("dual"), cfg, models=models,
                            prepared=reference_prepared, detectors=False)
    lat, _ = wake_latencies(trace)
    assert lat and lat == closed_form(reference_prepared, B)


def test_wakeword_cost_adds_compute_time(reference, reference_prepared, models):
    cfg = RunConfig()
    B = cfg.contention.buffer_frames
    cost = 4.0
    cfg.contention = ContentionModel({Loop.WAKEWORD: cost}, B)
    topo = free_topology("dual")
    cap = topo.devices[topo.placement[Loop.WAKEWORD]].capacity
    _, trace = run_scenario(reference, topo, cfg, models=models, prepared=reference_prepared,
                            detectors=False)
    lat, _ = wake_latencies(trace)
    want = closed_form(reference_prepared, B, B * cost / cap)
    assert lat == pytest.approx(want, abs=1e-6)


def test_placement_claim(reference, config, models, reference_prepared, single_run):
    single = load_topology("single")
    wake_dev = next(d for d in single.devices if d != single.placement[Loop.LVCSR]
                    and single.link(d, single.placement[Loop.DIALOG]) is not None)
    moved = single.with_placement(WAKEWORD=wake_dev)
    report, _ = run_scenario(reference, moved, config, models=models, prepared=reference_prepared,
                             detectors=False)
    assert report.wake_latency["mean_ms"] < single_run[0].wake_latency["mean_ms"]


def test_dual_beats_single(dual_run, single_run):
    assert dual_run[0].wake_latency["mean_ms"] < single_run[0].wake_latency["mean_ms"]


def test_same_seed_same_trace_bytes(reference, config, models, reference_prepared, dual_run):
    _, trace = run_scenario(reference, "dual", config, models=models, prepared=reference_prepared)
    assert dump_trace(trace) == dump_trace(dual_run[1])


# -- socket transport


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_socket_transport_preserves_order():
    port = free_port()
    got: list[Message] = []

    async def main():
        ready = asyncio.Event()
        server = asyncio.create_task(SocketTransport.serve("127.0.0.1", port, got.append, ready))
        await ready.wait()
        tx = SocketTransport({"y": ("127.0.0.1", port)})
        sent = [await tx.send("x", "y", "T", {"i": i}, float(i)) for i in range(50)]
        assert isinstance(await tx.send("x", "nobody", "T", 1, 0.0), RoutingError)
        for _ in range(200):
            if len(got) == 50:
                break
            await asyncio.sleep(0.01)
        await tx.close()
        server.cancel()
        return sent

    sent = asyncio.run(main())
    assert got == sent
