"""The conversation loop as a pure transition function.

``handle_event(state, event, ctx)`` returns either a :class:`Transition`
(next state plus commands for the other nodes) or a :class:`Rejected`
value naming the state and event; nothing is ever dropped silently.

Phases::

    IDLE         waiting for the wake word (eyes blue)
    LISTENING    recognizer running, listen window open (eyes green)
    RECOGNIZING  age game: photo taken, waiting for the face estimate
    EXECUTING    backend request in flight (clock icon)
    RESPONDING   robot speaking; returns to IDLE, or to LISTENING for a form prompt
    ERROR        red eyes until the recovery timer fires
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Protocol

from ..eyes import EyeEvent
from ..lvcsr_stub import RecognitionResult
from .catalog import (Catalog, FormPrompt, IntentKind, Session, SubmitRequest,
                      ValidationProblem, fill_and_submit, parse_intent)


class Phase(str, Enum):
    IDLE = "IDLE"
    LISTENING = "LISTENING"
    RECOGNIZING = "RECOGNIZING"
    EXECUTING = "EXECUTING"
    RESPONDING = "RESPONDING"
    ERROR = "ERROR"


class EventKind(str, Enum):
    WAKE_DETECTED = "WAKE_DETECTED"
    TRANSCRIPT_READY = "TRANSCRIPT_READY"
    TIMEOUT = "TIMEOUT"
    BACKEND_REPLY = "BACKEND_REPLY"
    FAULT = "FAULT"
    PHOTO_TAKEN = "PHOTO_TAKEN"


class Target(str, Enum):
    EYES = "EYES"
    MOTION = "MOTION"
    LVCSR = "LVCSR"
    BACKEND = "BACKEND"
    SPEECH = "SPEECH"
    TIMER = "TIMER"
    CAMERA = "CAMERA"
    FACE = "FACE"


@dataclass(frozen=True)
class Command:
    target: Target
    op: str
    arg: Any = None


@dataclass(frozen=True)
class InteractionEvent:
    kind: EventKind
    t_ms: int
    payload: Any = None

    def __post_init__(self):
        k, p = self.kind, self.payload
        if k is EventKind.TRANSCRIPT_READY and not isinstance(p, RecognitionResult):
            raise ValueError("TRANSCRIPT_READY carries a RecognitionResult")
        if k is EventKind.TIMEOUT and not isinstance(p, int):
            raise ValueError("TIMEOUT carries its timer id")
        if k is EventKind.BACKEND_REPLY and not (isinstance(p, dict) and "token" in p):
            raise ValueError("BACKEND_REPLY carries a reply with its request token")


@dataclass(frozen=True)
class DialogState:
    phase: Phase = Phase.IDLE
    session: Session | None = None
    deadline_ms: int | None = None
    timer: int = 0                       # id of the live timer, 0 when none
    n_timers: int = 0
    pending: str | None = None           # token of the backend request in flight
    resume_listening: bool = False       # RESPONDING goes back to LISTENING
    map_shown: bool = False
    n_sessions: int = 0
    n_requests: int = 0

    def __post_init__(self):
        if self.phase is Phase.LISTENING and self.deadline_ms is None:
            raise ValueError("LISTENING requires a deadline")


@dataclass(frozen=True)
class Transition:
    state: DialogState
    commands: tuple[Command, ...]


@dataclass(frozen=True)
class Rejected:
    state: DialogState
    event: InteractionEvent
    reason: str


class AgeEstimator(Protocol):
    def estimate(self, photo: Any) -> int: ...


class AgeClientError(Exception):
    pass


@dataclass
class StubAgeClient:
    """Deterministic stand-in for a cloud face-analysis service."""
    answer: int = 30
    fail: bool = False

    def estimate(self, photo: Any) -> int:
        if self.fail:
            raise AgeClientError("face service unavailable")
        return self.answer


@dataclass
class DialogConfig:
    listen_ms: int = 8000
    error_recovery_ms: int = 3000
    respond_ms: int = 2000
    execute_timeout_ms: int = 5000
    photo_timeout_ms: int = 5000


@dataclass
class DialogContext:
    catalog: Catalog = field(default_factory=Catalog)
    config: DialogConfig = field(default_factory=DialogConfig)
    age_client: AgeEstimator = field(default_factory=StubAgeClient)


def eye(ev: EyeEvent) -> Command:
    return Command(Target.EYES, ev.value)


def say(text: str) -> Command:
    return Command(Target.SPEECH, "SAY", text)


# --------------------------------------------------------------------------
# age game


@dataclass(frozen=True)
class AgeGameResult:
    response: str
    commands: tuple[Command, ...]
    age: int | None


def age_game_begin() -> tuple[Command, ...]:
    """Camera icon, selfie pose, then the capture request."""
    return (eye(EyeEvent.PHOTO_BEGIN), Command(Target.MOTION, "PLAY", "selfie_pose"),
            Command(Target.CAMERA, "CAPTURE"))


def age_game_finish(photo: Any, client: AgeEstimator) -> AgeGameResult:
    try:
        age = int(client.estimate(photo))
    except AgeClientError as exc:
        return AgeGameResult(f"error: {exc}", (Command(Target.FACE, "ESTIMATE", None),
                                               eye(EyeEvent.PHOTO_END), eye(EyeEvent.ERROR)), None)
    text = f"I think you are {age} years old"
    return AgeGameResult(text, (Command(Target.FACE, "ESTIMATE", age), eye(EyeEvent.PHOTO_END),
                                say(text)), age)


def age_game(photo: Any, client: AgeEstimator) -> AgeGameResult:
    """The whole game in one call: capture commands come before the estimate."""
    done = age_game_finish(photo, client)
    return replace(done, commands=age_game_begin() + done.commands)


# --------------------------------------------------------------------------
# transition function


def _set_timer(state: DialogState, at: int) -> tuple[DialogState, list[Command]]:
    """Replace the live timer (at most one exists) with a new one firing at ``at``."""
    cmds = _cancel_timer(state)
    tid = state.n_timers + 1
    cmds.append(Command(Target.TIMER, "SET", {"id": tid, "at": at}))
    return replace(state, timer=tid, n_timers=tid), cmds


def _cancel_timer(state: DialogState) -> list[Command]:
    return [Command(Target.TIMER, "CANCEL", state.timer)] if state.timer else []


def _enter_listening(state: DialogState, t: int, ctx: DialogContext,
                     pre: list[Command]) -> Transition:
    """Common path into LISTENING; ``pre`` holds the exit commands of the old phase."""
    cmds = list(pre)
    session = state.session
    n_sessions = state.n_sessions
    if session is None:
        n_sessions += 1
        session = Session(f"s{n_sessions}")
    if state.phase is Phase.ERROR:
        cmds.append(eye(EyeEvent.ERROR_CLEARED))
    if state.phase is not Phase.LISTENING:
        cmds.append(eye(EyeEvent.WAKE_DETECTED))
        cmds.append(Command(Target.LVCSR, "START"))
    deadline = t + ctx.config.listen_ms
    st = replace(state, phase=Phase.LISTENING, session=session, deadline_ms=deadline,
                 pending=None, resume_listening=False, n_sessions=n_sessions)
    st, tcmds = _set_timer(st, deadline)
    return Transition(st, tuple(cmds + tcmds))


def _enter_responding(state: DialogState, t: int, ctx: DialogContext, cmds: list[Command],
                      text: str, resume: bool = False, **changes) -> Transition:
    st = replace(state, phase=Phase.RESPONDING, deadline_ms=None, pending=None,
                 resume_listening=resume, **changes)
    st, tcmds = _set_timer(st, t + ctx.config.respond_ms)
    return Transition(st, tuple(cmds + [say(text)] + tcmds))


def _enter_error(state: DialogState, t: int, ctx: DialogContext, cmds: list[Command]) -> Transition:
    st = replace(state, phase=Phase.ERROR, deadline_ms=None, pending=None, session=None,
                 resume_listening=False)
    st, tcmds = _set_timer(st, t + ctx.config.error_recovery_ms)
    return Transition(st, tuple(cmds + [eye(EyeEvent.ERROR)] + tcmds))


def _to_idle(state: DialogState, cmds: list[Command]) -> Transition:
    cmds = _cancel_timer(state) + cmds
    if state.map_shown:
        cmds = cmds + [eye(EyeEvent.HIDE_MAP)]
    st = replace(state, phase=Phase.IDLE, session=None, deadline_ms=None, pending=None,
                 resume_listening=False, map_shown=False, timer=0)
    return Transition(st, tuple(cmds))


def _dispatch(state: DialogState, ev: InteractionEvent, ctx: DialogContext) -> Transition:
    """LISTENING + TRANSCRIPT_READY: act on the recognised intent."""
    t = ev.t_ms
    result: RecognitionResult = ev.payload
    session = replace(state.session, history=state.session.history + (" ".join(result.tokens),))
    state = replace(state, session=session)
    intent = parse_intent(result, ctx.catalog, session)
    cmds = [eye(EyeEvent.STOP_LISTENING)]
    k = intent.kind
    if k is IntentKind.STOP:
        return _to_idle(state, cmds + [Command(Target.LVCSR, "STOP")])
    if k is IntentKind.ACTION:
        n = state.n_requests + 1
        token = f"{session.id}-a{n}"
        arg = {"action_id": intent.action_id, "params": dict(intent.params), "token": token}
        return _execute(state, t, ctx, cmds, Command(Target.BACKEND, "ACTION", arg), token, n)
    if k in (IntentKind.FORM, IntentKind.FIELD_FILL):
        session, outcome = fill_and_submit(session, intent, ctx.catalog)
        state = replace(state, session=session)
        if isinstance(outcome, SubmitRequest):
            n = state.n_requests + 1
            arg = {"form_id": outcome.form_id, "fields": dict(outcome.fields), "token": outcome.token}
            return _execute(state, t, ctx, cmds, Command(Target.BACKEND, "SUBMIT", arg),
                            outcome.token, n)
        if isinstance(outcome, FormPrompt):
            return _enter_responding(state, t, ctx, cmds, outcome.text, resume=True)
        assert isinstance(outcome, ValidationProblem)
        return _enter_responding(state, t, ctx, cmds, outcome.text,
                                 resume=session.form_id is not None)
    if k is IntentKind.GAME:
        # the camera icon replaces a map on display
        st = replace(state, phase=Phase.RECOGNIZING, deadline_ms=None, map_shown=False)
        st, tcmds = _set_timer(st, t + ctx.config.photo_timeout_ms)
        return Transition(st, tuple(cmds + list(age_game_begin()) + tcmds))
    if k is IntentKind.GESTURE:
        return _enter_responding(state, t, ctx, cmds + [Command(Target.MOTION, "PLAY", intent.name)],
                                 "okay")
    if k is IntentKind.MAP:
        extra = [] if state.map_shown else [eye(EyeEvent.SHOW_MAP)]
        return _enter_responding(state, t, ctx, cmds + extra, "here is the map", map_shown=True)
    return _enter_responding(state, t, ctx, cmds, "sorry, I did not understand")


def _execute(state: DialogState, t: int, ctx: DialogContext, cmds: list[Command],
             request: Command, token: str, n: int) -> Transition:
    st = replace(state, phase=Phase.EXECUTING, deadline_ms=None, pending=token, n_requests=n,
                 map_shown=False)
    st, tcmds = _set_timer(st, t + ctx.config.execute_timeout_ms)
    return Transition(st, tuple(cmds + [eye(EyeEvent.WAIT_BEGIN), request] + tcmds))


def handle_event(state: DialogState, event: InteractionEvent,
                 ctx: DialogContext | None = None) -> Transition | Rejected:
    ctx = ctx or default_context()
    ph, k, t = state.phase, event.kind, event.t_ms

    def reject(reason: str) -> Rejected:
        return Rejected(state, event, reason)

    if k is EventKind.TIMEOUT:
        if not state.timer or event.payload != state.timer:
            return reject("stale timer")
        state = replace(state, timer=0)    # the timer has fired

    if k is EventKind.WAKE_DETECTED:
        # the dialog-loop interrupt: every phase goes (back) to LISTENING
        pre: list[Command] = []
        if ph in (Phase.LISTENING, Phase.IDLE):
            pass
        elif ph is Phase.EXECUTING:
            pre = [Command(Target.BACKEND, "CANCEL", state.pending), eye(EyeEvent.WAIT_END)]
        elif ph is Phase.RECOGNIZING:
            pre = [Command(Target.CAMERA, "CANCEL"), eye(EyeEvent.PHOTO_END)]
        elif ph is Phase.RESPONDING:
            pre = [Command(Target.SPEECH, "STOP")]
        return _enter_listening(state, t, ctx, pre)

    if ph is Phase.IDLE:
        return reject("idle: only the wake word is accepted")

    if k is EventKind.FAULT:
        pre = []
        if ph is Phase.LISTENING:
            pre = [Command(Target.LVCSR, "STOP")]
        elif ph is Phase.EXECUTING:
            pre = [Command(Target.BACKEND, "CANCEL", state.pending), eye(EyeEvent.WAIT_END)]
        elif ph is Phase.RECOGNIZING:
            pre = [Command(Target.CAMERA, "CANCEL"), eye(EyeEvent.PHOTO_END)]
        elif ph is Phase.RESPONDING:
            pre = [Command(Target.SPEECH, "STOP")]
        if ph is Phase.ERROR:
            # a new fault restarts the recovery timer; eyes are already red
            st, tcmds = _set_timer(state, t + ctx.config.error_recovery_ms)
            return Transition(st, tuple(tcmds))
        return _enter_error(state, t, ctx, pre)

    if ph is Phase.LISTENING:
        if k is EventKind.TRANSCRIPT_READY:
            return _dispatch(state, event, ctx)
        if k is EventKind.TIMEOUT:
            return _to_idle(state, [eye(EyeEvent.STOP_LISTENING), Command(Target.LVCSR, "STOP")])
        return reject("not expected while listening")

    if ph is Phase.EXECUTING:
        if k is EventKind.BACKEND_REPLY:
            reply = event.payload
            if reply["token"] != state.pending:
                return reject("reply to a cancelled request")
            text = reply.get("text") or ("done" if reply.get("ok") else "that did not work")
            return _enter_responding(state, t, ctx, [eye(EyeEvent.WAIT_END)], text)
        if k is EventKind.TIMEOUT:
            cmds = [Command(Target.BACKEND, "CANCEL", state.pending), eye(EyeEvent.WAIT_END)]
            return _enter_responding(state, t, ctx, cmds, "sorry, the service did not answer")
        return reject("not expected while executing")

    if ph is Phase.RECOGNIZING:
        if k is EventKind.PHOTO_TAKEN:
            done = age_game_finish(event.payload, ctx.age_client)
            if done.age is None:
                # the red eye command is part of the game's own output
                st = replace(state, phase=Phase.ERROR, session=None, deadline_ms=None)
                st, tcmds = _set_timer(st, t + ctx.config.error_recovery_ms)
                return Transition(st, tuple(list(done.commands) + tcmds))
            return _enter_responding(state, t, ctx, list(done.commands[:-1]), done.response)
        if k is EventKind.TIMEOUT:
            cmds = [Command(Target.CAMERA, "CANCEL"), eye(EyeEvent.PHOTO_END)]
            return _enter_responding(state, t, ctx, cmds, "sorry, I could not take the photo")
        return reject("not expected while recognizing")

    if ph is Phase.RESPONDING:
        if k is EventKind.TIMEOUT:
            if state.resume_listening:
                return _enter_listening(state, t, ctx, [])
            return _to_idle(state, [])
        return reject("not expected while responding")

    # ERROR
    if k is EventKind.TIMEOUT:
        return _to_idle(state, [eye(EyeEvent.ERROR_CLEARED)])
    return reject("not expected in error")


_CTX: DialogContext | None = None


def default_context() -> DialogContext:
    global _CTX
    if _CTX is None:
        _CTX = DialogContext()
    return _CTX
