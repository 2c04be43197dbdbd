"""Boot the robot on the simulated fabric and replay a scenario."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..dialog.machine import DialogContext, StubAgeClient
from ..fabric import Simulator, Topology, load_topology, measure_wake_latency
from ..phonostream import FRAME_PERIOD_MS
from ..wakeword.detect import Algorithm, Detection
from ..wakeword.evaluate import WakewordModels, default_models, evaluate_detector, make_spotter
from .config import RunConfig, default_config
from .nodes import (BackendNode, DialogNode, EyesNode, LvcsrNode, MotionNode, VisionNode,
                    WakewordNode, keyword_end_mark)
from .report import RunReport, budget_checks, eye_log, transition_counts
from .scenario import Scenario, ScenarioError, StimulusKind, Utterance, build_utterances

TAIL_MS = 2000.0


@dataclass
class Run:
    """A booted simulation, kept for inspection after :meth:`finish`."""
    scenario: Scenario
    topology: Topology
    config: RunConfig
    seed: int
    sim: Simulator
    utterances: list[Utterance]
    detections: list[list[Detection]]
    nodes: dict
    end_ms: float

    def finish(self) -> list[dict]:
        self.sim.run_until(self.end_ms)
        return self.sim.trace


def _resolve_topology(scenario: Scenario, topology: Topology | str | None) -> Topology:
    ref = topology if topology is not None else scenario.topology
    if isinstance(ref, Topology):
        return ref
    try:
        return load_topology(ref)
    except (FileNotFoundError, KeyError) as exc:
        raise ScenarioError(f"cannot resolve topology {ref!r}: {exc}") from None


@dataclass(frozen=True)
class Prepared:
    """Utterance streams and their detections; independent of topology and costs."""
    utterances: list[Utterance]
    detections: list[list[Detection]]


def prepare(scenario: Scenario, config: RunConfig, models: WakewordModels | None = None) -> Prepared:
    utts = build_utterances(scenario, config.wakeword.noise)
    models = models or default_models()
    ww = config.wakeword
    spotter = make_spotter(ww.algorithm, ww.thresholds[ww.algorithm], models)
    return Prepared(utts, [list(spotter(u.stream)) for u in utts])


def with_seed(scenario: Scenario, seed: int | None) -> Scenario:
    if seed is None or seed == scenario.seed:
        return scenario
    return Scenario(scenario.name, scenario.timeline, scenario.topology, seed, scenario.source)


def boot(scenario: Scenario, topology: Topology | str | None = None, config: RunConfig | None = None,
         seed: int | None = None, models: WakewordModels | None = None,
         prepared: Prepared | None = None) -> Run:
    """Resolve every reference, then create the nodes and schedule the timeline.

    ``prepared`` must come from :func:`prepare` on the same scenario, seed
    and wake-word settings; it lets sweeps skip re-running the detector.
    """
    config = config or default_config()
    topo = _resolve_topology(scenario, topology)
    scenario = with_seed(scenario, seed)
    seed = scenario.seed
    prepared = prepared or prepare(scenario, config, models)
    utts, dets = prepared.utterances, prepared.detections

    cm = config.contention
    sim = Simulator(topo, seed, cm)
    nodes = {
        "wakeword": WakewordNode(utts, dets, cm.buffer_frames),
        "lvcsr": LvcsrNode(utts, cm.buffer_frames, config.lvcsr_wer, seed),
        "dialog": DialogNode(DialogContext(config=config.dialog, age_client=StubAgeClient())),
        "vision": VisionNode(),
        "eyes": EyesNode(),
        "motion": MotionNode(config.motion, config.tracking_window_ms),
        "backend": BackendNode(),
    }
    for n in nodes.values():
        sim.add_node(n)

    if not scenario.timeline:
        return Run(scenario, topo, config, seed, sim, utts, dets, nodes, 0.0)

    last = max([s.t_ms for s in scenario.timeline]
               + [u.start_ms + u.stream.duration_ms for u in utts])
    end = last + config.dialog.listen_ms + config.tracking_window_ms + TAIL_MS
    buf_ms = cm.buffer_frames * FRAME_PERIOD_MS

    def audio(s: Simulator, k: int = 0) -> None:
        nodes["wakeword"].on_buffer(s, k)
        nodes["lvcsr"].on_buffer(s, k)
        if (k + 2) * buf_ms <= end:
            s.call_at((k + 2) * buf_ms, "audio", lambda s2: audio(s2, k + 1))

    def camera(s: Simulator, k: int = 0) -> None:
        nodes["vision"].on_frame(s, k)
        t = (k + 1) * cm.vision_period_ms
        if t <= end:
            s.call_at(t, "camera", lambda s2: camera(s2, k + 1))

    sim.call_at(buf_ms, "audio", audio)
    sim.call_at(0.0, "camera", camera)
    for u in utts:
        if u.keyword_end_ms is not None:
            sim.call_at(u.keyword_end_ms, "keyword_end", keyword_end_mark(u.index))
    for s in scenario.timeline:
        if s.kind is StimulusKind.FACE:
            sim.call_at(s.t_ms, "face", lambda x, s=s: nodes["vision"].observe(x, s.yaw, s.pitch))
        elif s.kind is StimulusKind.FAULT:
            sim.call_at(s.t_ms, "fault", lambda x, s=s: nodes["dialog"].fault(x, s.text))
    return Run(scenario, topo, config, seed, sim, utts, dets, nodes, end)


def detector_metrics(utts: Sequence[Utterance], config: RunConfig,
                     models: WakewordModels) -> dict[str, dict]:
    """``evaluate_detector`` for every algorithm on the scenario's own streams."""
    streams = [u.stream for u in utts]
    if not streams:
        return {}
    out = {}
    for alg in Algorithm:
        thr = config.wakeword.thresholds[alg]
        m = evaluate_detector(make_spotter(alg, thr, models), streams, alg.value, thr)
        out[alg.value] = m.to_dict()
    return out


def run_scenario(scenario: Scenario, topology: Topology | str | None = None,
                 config: RunConfig | None = None, seed: int | None = None,
                 models: WakewordModels | None = None, prepared: Prepared | None = None,
                 detectors: bool = True) -> tuple[RunReport, list[dict]]:
    """Run to completion; returns the report and the full trace.

    With ``detectors=False`` the per-algorithm detector section is left empty
    (calibration sweeps only need the latency).
    """
    config = config or default_config()
    models = models or default_models()
    run = boot(scenario, topology, config, seed, models, prepared)
    trace = run.finish()
    stats = measure_wake_latency(trace)
    trans, rejected = transition_counts(trace)
    report = RunReport(
        scenario=run.scenario.name, topology=run.topology.name, seed=run.seed,
        n_utterances=len(run.utterances),
        wake_latency=stats.to_dict() if stats else None,
        detectors=detector_metrics(run.utterances, config, models) if detectors else {},
        dialog_transitions=trans, dialog_rejections=rejected,
        tracking=[{k: r[k] for k in ("t", "step", "settle_ms", "final_error")}
                  for r in trace if r["ev"] == "settle"],
        eye_log=eye_log(trace),
        budgets=budget_checks(trace, config.budgets),
    )
    return report, trace
