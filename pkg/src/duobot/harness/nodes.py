"""The robot's nodes on the simulated fabric.

Audio is cut into buffers of ``buffer_frames`` 10 ms frames. When a buffer
is complete, the wake-word loop queues a job for every frame and the
recognizer loop a job for the speech frames; both jobs run on whatever
device the topology places the loop on. A wake-word detection is sent to
the dialog node once the job holding the detector's decision frame is done.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..backend import BackendError, FormService
from ..dialog.machine import (Command, DialogContext, DialogState, EventKind, InteractionEvent,
                              Rejected, StubAgeClient, Target, handle_event)
from ..eyes import EyeDisplay, EyeEvent
from ..fabric import KEYWORD_END_MARK, WAKE_TOPIC, Loop, Message, Simulator
from ..lvcsr_stub import ErrorKind, RecognitionResult, recognize
from ..motion import FaceObservation, MotionConfig, MotionError, ServoChain, settle_time
from ..phonostream import FRAME_PERIOD_MS, SIL
from ..wakeword.detect import Detection
from .scenario import Utterance

log = logging.getLogger(__name__)

MOTION_DT_MS = 10.0


def _ms(t: float) -> int:
    return int(round(t))


class WakewordNode:
    name = "wakeword"

    def __init__(self, utterances: Sequence[Utterance], detections: Sequence[Sequence[Detection]],
                 buffer_frames: int):
        self.buffer_frames = buffer_frames
        # absolute frame holding each decision -> (utterance, detection)
        self.by_frame: dict[int, list[tuple[int, Detection]]] = {}
        for u, dets in zip(utterances, detections):
            for d in dets:
                f = u.start_frame + max(d.t_detect_ms // FRAME_PERIOD_MS - 1, 0)
                self.by_frame.setdefault(f, []).append((u.index, d))

    def on_buffer(self, sim: Simulator, k: int) -> None:
        sim.submit(self.name, Loop.WAKEWORD, self.buffer_frames, lambda s: self._done(s, k), f"b{k}")

    def _done(self, sim: Simulator, k: int) -> None:
        B = self.buffer_frames
        for f in range(k * B, (k + 1) * B):
            for utt, d in self.by_frame.get(f, ()):
                sim.send(self.name, "dialog", WAKE_TOPIC,
                         {"utt": utt, "score": round(d.score, 6), "algorithm": d.algorithm.value})

    def on_message(self, sim: Simulator, msg: Message) -> None:
        sim.record({"ev": "ignored", "node": self.name, "topic": msg.topic})


class LvcsrNode:
    name = "lvcsr"

    def __init__(self, utterances: Sequence[Utterance], buffer_frames: int, wer: float, seed: int):
        self.buffer_frames = buffer_frames
        self.wer = wer
        self.seed = seed
        self.speech: dict[int, int] = {}          # buffer -> speech frames
        self.ends: dict[int, list[Utterance]] = {}
        for u in utterances:
            labels = u.stream.script.frame_labels
            speech = [u.start_frame + i for i, p in enumerate(labels) if p != SIL]
            for f in speech:
                b = f // buffer_frames
                self.speech[b] = self.speech.get(b, 0) + 1
            if speech:
                self.ends.setdefault(speech[-1] // buffer_frames, []).append(u)
        self.armed = False
        self.n_transcripts = 0

    def on_buffer(self, sim: Simulator, k: int) -> None:
        n = self.speech.get(k, 0)
        if n:
            sim.submit(self.name, Loop.LVCSR, n, lambda s: self._done(s, k), f"b{k}")

    def _done(self, sim: Simulator, k: int) -> None:
        for u in self.ends.get(k, ()):
            if not self.armed:
                continue
            res = recognize(list(u.command), self.wer, int(np.random.SeedSequence([self.seed, 2, u.index])
                                                           .generate_state(1)[0]))
            self.armed = False
            self.n_transcripts += 1
            sim.send(self.name, "dialog", "TRANSCRIPT_READY", {
                "utt": u.index, "tokens": list(res.tokens),
                "confidences": [round(c, 6) for c in res.confidences],
                "flags": [None if f is None else f.value for f in res.flags],
                "reference": list(res.reference)})

    def on_message(self, sim: Simulator, msg: Message) -> None:
        if msg.topic == "START":
            self.armed = True
        elif msg.topic == "STOP":
            self.armed = False


class DialogNode:
    name = "dialog"

    def __init__(self, ctx: DialogContext):
        self.ctx = ctx
        self.state = DialogState()
        self.timers: dict[int, int] = {}          # dialog timer id -> simulator timer id
        self.n_photos = 0

    def on_message(self, sim: Simulator, msg: Message) -> None:
        data = msg.data()
        t = _ms(sim.now)
        if msg.topic == WAKE_TOPIC:
            ev = InteractionEvent(EventKind.WAKE_DETECTED, t, data)
        elif msg.topic == "TRANSCRIPT_READY":
            res = RecognitionResult(tuple(data["tokens"]), tuple(data["confidences"]),
                                    tuple(None if f is None else ErrorKind(f) for f in data["flags"]),
                                    reference=tuple(data["reference"]))
            ev = InteractionEvent(EventKind.TRANSCRIPT_READY, t, res)
        elif msg.topic == "BACKEND_REPLY":
            ev = InteractionEvent(EventKind.BACKEND_REPLY, t, data)
        elif msg.topic == "PHOTO_TAKEN":
            ev = InteractionEvent(EventKind.PHOTO_TAKEN, t, data["photo"])
        else:
            sim.record({"ev": "ignored", "node": self.name, "topic": msg.topic})
            return
        self.post(sim, ev)

    def post(self, sim: Simulator, ev: InteractionEvent) -> None:
        """Queue an event on the dialog loop; it is handled when its job completes."""
        sim.submit(self.name, Loop.DIALOG, 1, lambda s: self.handle(s, ev), ev.kind.value)

    def fault(self, sim: Simulator, what: str) -> None:
        self.post(sim, InteractionEvent(EventKind.FAULT, _ms(sim.now), what))

    def handle(self, sim: Simulator, ev: InteractionEvent) -> None:
        before = self.state.phase
        # timestamps follow the handling time, not the arrival time
        ev = InteractionEvent(ev.kind, _ms(sim.now), ev.payload)
        out = handle_event(self.state, ev, self.ctx)
        if isinstance(out, Rejected):
            sim.record({"ev": "dialog", "event": ev.kind.value, "from": before.value,
                        "to": None, "reason": out.reason})
            return
        self.state = out.state
        sim.record({"ev": "dialog", "event": ev.kind.value, "from": before.value,
                    "to": out.state.phase.value})
        for c in out.commands:
            self._run(sim, c)

    def _run(self, sim: Simulator, c: Command) -> None:
        tg = c.target
        if tg is Target.EYES:
            sim.send(self.name, "eyes", "EYE", {"op": c.op})
        elif tg is Target.MOTION:
            sim.send(self.name, "motion", c.op, {"gesture": c.arg})
        elif tg is Target.LVCSR:
            sim.send(self.name, "lvcsr", c.op)
        elif tg is Target.BACKEND:
            sim.send(self.name, "backend", c.op, c.arg if isinstance(c.arg, dict) else {"token": c.arg})
        elif tg is Target.CAMERA:
            sim.send(self.name, "vision", c.op)
        elif tg is Target.TIMER:
            if c.op == "SET":
                tid = c.arg["id"]
                self.timers[tid] = sim.call_at(c.arg["at"], "dialog_timeout",
                                               lambda s, tid=tid: self._timeout(s, tid))
            else:
                sid = self.timers.pop(c.arg, None)
                if sid is not None:
                    sim.cancel(sid)
        elif tg is Target.SPEECH:
            sim.record({"ev": "speech", "op": c.op, "text": c.arg})
        else:
            sim.record({"ev": "face_estimate", "age": c.arg})

    def _timeout(self, sim: Simulator, tid: int) -> None:
        self.timers.pop(tid, None)
        self.post(sim, InteractionEvent(EventKind.TIMEOUT, _ms(sim.now), tid))


class EyesNode:
    name = "eyes"

    def __init__(self):
        self.display = EyeDisplay()

    def on_message(self, sim: Simulator, msg: Message) -> None:
        op = msg.data()["op"]
        ok = self.display.handle(_ms(sim.now), EyeEvent(op))
        sim.record({"ev": "eye", "op": op, "ok": ok, "state": str(self.display.state)})


class MotionNode:
    name = "motion"

    def __init__(self, config: MotionConfig, window_ms: float):
        self.chain = ServoChain(config)
        self.window_ms = window_ms
        self.track: dict | None = None
        self.n_steps = 0

    def _advance(self, t: float) -> None:
        ch = self.chain
        while ch.t < t - 1e-9:
            ch.step(min(MOTION_DT_MS, t - ch.t))
            if self.track is not None:
                self.track["errors"].append((ch.t - self.track["t0"], self.track["target"] - ch.gaze()[0]))

    def on_message(self, sim: Simulator, msg: Message) -> None:
        self._advance(sim.now)
        data = msg.data() or {}
        if msg.topic == "PLAY":
            try:
                end = self.chain.play_gesture(data["gesture"])
                sim.record({"ev": "gesture", "name": data["gesture"], "end": round(end, 6)})
            except MotionError as exc:
                sim.record({"ev": "motion_error", "detail": str(exc)})
        elif msg.topic == "FACE":
            self._begin_tracking(sim, data["yaw"], data["pitch"])
        else:
            sim.record({"ev": "ignored", "node": self.name, "topic": msg.topic})

    def _begin_tracking(self, sim: Simulator, yaw: float, pitch: float) -> None:
        if self.track is not None:
            self._finish(sim)
        gy, gp = self.chain.gaze()
        self.track = {"t0": self.chain.t, "step": yaw, "target": gy + yaw, "pitch": gp + pitch,
                      "errors": [], "end": sim.now + self.window_ms, "timer": None}
        self._tick(sim)

    def _tick(self, sim: Simulator) -> None:
        tr = self.track
        self._advance(sim.now)
        if sim.now >= tr["end"] - 1e-9:
            self._finish(sim)
            return
        gy, gp = self.chain.gaze()
        self.chain.track_face(FaceObservation(tr["target"] - gy, tr["pitch"] - gp, self.chain.t))
        tr["timer"] = sim.call_at(sim.now + self.chain.cfg.control_period_ms, "motion_control", self._tick)

    def _finish(self, sim: Simulator) -> None:
        tr, self.track = self.track, None
        if tr["timer"] is not None and sim.now < tr["end"] - 1e-9:
            sim.cancel(tr["timer"])
        st = settle_time(tr["errors"])
        sim.record({"ev": "settle", "step": tr["step"], "settle_ms": None if st is None else round(st, 6),
                    "final_error": round(tr["errors"][-1][1], 6) if tr["errors"] else None})


class BackendNode:
    name = "backend"

    def __init__(self, service: FormService | None = None):
        self.service = service or FormService()

    def on_message(self, sim: Simulator, msg: Message) -> None:
        data = msg.data()
        t = _ms(sim.now)
        token = data.get("token")
        try:
            if msg.topic == "SUBMIT":
                sub = self.service.submit_form(int(data["form_id"]), dict(data["fields"]), token, t)
                reply = {"token": token, "ok": True, "text": f"your request {sub.id} was received"}
            elif msg.topic == "ACTION":
                res = self.service.perform_action(int(data["action_id"]), dict(data["params"]), token, t)
                reply = {"token": token, "ok": True, "text": res.reply}
            elif msg.topic == "CANCEL":
                sim.record({"ev": "backend_cancel", "token": token})
                return
            else:
                sim.record({"ev": "ignored", "node": self.name, "topic": msg.topic})
                return
        except BackendError as exc:
            reply = {"token": token, "ok": False, "code": exc.code.value, "text": exc.detail}
        sim.send(self.name, "dialog", "BACKEND_REPLY", reply)


@dataclass
class VisionNode:
    name: str = "vision"
    faces: list[tuple[float, float]] = field(default_factory=list)
    capture: bool = False
    n_photos: int = 0

    def observe(self, sim: Simulator, yaw: float, pitch: float) -> None:
        self.faces.append((yaw, pitch))

    def on_frame(self, sim: Simulator, k: int) -> None:
        sim.submit(self.name, Loop.VISION, 1, self._done, f"f{k}")

    def _done(self, sim: Simulator) -> None:
        for yaw, pitch in self.faces:
            sim.send(self.name, "motion", "FACE", {"yaw": yaw, "pitch": pitch})
        self.faces.clear()
        if self.capture:
            self.capture = False
            self.n_photos += 1
            sim.send(self.name, "dialog", "PHOTO_TAKEN", {"photo": f"photo-{self.n_photos}"})

    def on_message(self, sim: Simulator, msg: Message) -> None:
        if msg.topic == "CAPTURE":
            self.capture = True
        elif msg.topic == "CANCEL":
            self.capture = False


def keyword_end_mark(utt: int):
    def mark(sim: Simulator) -> None:
        sim.record({"ev": "mark", "name": KEYWORD_END_MARK, "utt": utt})
    return mark


def default_dialog_context(config) -> DialogContext:
    return DialogContext(config=config, age_client=StubAgeClient())
