"""Form and action service with an append-only log and idempotent submission.

Log framing: each record is a 4-byte big-endian unsigned length followed by
that many bytes of UTF-8 JSON (keys sorted). A truncated final record, as
left by a crash mid-append, is dropped on replay.
"""

from __future__ import annotations

import asyncio
import json
import os
import struct
from dataclasses import asdict, dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterator

N_ACTIONS = 129
N_FORMS = 259
_LEN = struct.Struct(">I")


class Status(str, Enum):
    PENDING = "PENDING"
    ACCEPTED = "ACCEPTED"
    REJECTED = "REJECTED"


class ErrorCode(str, Enum):
    NOT_FOUND = "NOT_FOUND"
    VALIDATION = "VALIDATION"
    BAD_REQUEST = "BAD_REQUEST"


class BackendError(Exception):
    def __init__(self, code: ErrorCode, detail: str, field: str | None = None):
        super().__init__(f"{code.value}: {detail}")
        self.code = code
        self.detail = detail
        self.field = field


@dataclass(frozen=True)
class ActionDescriptor:
    id: int
    name: str
    required: tuple[str, ...]


@dataclass(frozen=True)
class FieldSpec:
    name: str
    required: bool = True


@dataclass(frozen=True)
class FormSchema:
    id: int
    name: str
    fields: tuple[FieldSpec, ...]

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    @property
    def required(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields if f.required)


@dataclass
class FormSubmission:
    id: str
    form_id: int
    fields: dict[str, str]
    token: str
    status: Status
    t_ms: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["status"] = self.status.value
        return d


@dataclass(frozen=True)
class ActionResult:
    action_id: int
    token: str
    reply: str


def load_actions(path: str | Path | None = None) -> list[ActionDescriptor]:
    if path is None:
        text = resources.files("duobot.data").joinpath("actions.tsv").read_text()
    else:
        text = Path(path).read_text()
    out = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        aid, name, params = (line.split("\t") + [""])[:3]
        out.append(ActionDescriptor(int(aid), name, tuple(p for p in params.split(",") if p)))
    return out


def load_forms(path: str | Path | None = None) -> dict[int, FormSchema]:
    if path is None:
        text = resources.files("duobot.data").joinpath("forms.json").read_text()
    else:
        text = Path(path).read_text()
    doc = json.loads(text)
    if doc.get("format") != "duobot-forms":
        raise ValueError("not a duobot forms file")
    return {f["id"]: FormSchema(f["id"], f["name"],
                                tuple(FieldSpec(x["name"], x["required"]) for x in f["fields"]))
            for f in doc["forms"]}


# --------------------------------------------------------------------------
# log


class AppendOnlyLog:
    def __init__(self, path: str | Path, fsync: bool = True):
        self.path = Path(path)
        self.fsync = fsync
        self._fh = None

    def append(self, record: dict) -> None:
        data = json.dumps(record, sort_keys=True, separators=(",", ":")).encode()
        if self._fh is None:
            self._fh = open(self.path, "ab")
        self._fh.write(_LEN.pack(len(data)) + data)
        self._fh.flush()
        if self.fsync:
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def records(self) -> Iterator[dict]:
        if not self.path.exists():
            return
        data = self.path.read_bytes()
        pos = 0
        while pos + _LEN.size <= len(data):
            (n,) = _LEN.unpack_from(data, pos)
            if pos + _LEN.size + n > len(data):
                break
            yield json.loads(data[pos + _LEN.size:pos + _LEN.size + n])
            pos += _LEN.size + n
        if pos != len(data):
            # drop the torn tail so later appends start on a record boundary
            with open(self.path, "r+b") as fh:
                fh.truncate(pos)


# --------------------------------------------------------------------------
# service


@dataclass
class FormService:
    """Single-writer service; every state change is logged before it is acknowledged."""

    log: AppendOnlyLog | None = None
    forms: dict[int, FormSchema] = field(default_factory=load_forms)
    actions: list[ActionDescriptor] = field(default_factory=load_actions)
    submissions: dict[str, FormSubmission] = field(default_factory=dict, init=False)
    by_token: dict[str, str] = field(default_factory=dict, init=False)
    action_tokens: dict[str, ActionResult] = field(default_factory=dict, init=False)

    def __post_init__(self):
        ids = [a.id for a in self.actions]
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError("action ids must be dense from 1")
        if self.log is not None:
            for rec in self.log.records():
                self._apply(rec)

    @classmethod
    def open(cls, path: str | Path, fsync: bool = True) -> "FormService":
        return cls(AppendOnlyLog(path, fsync))

    def close(self) -> None:
        if self.log is not None:
            self.log.close()

    # -- queries

    def list_actions(self) -> list[ActionDescriptor]:
        return sorted(self.actions, key=lambda a: a.id)

    def get_status(self, submission_id: str) -> Status:
        sub = self.submissions.get(submission_id)
        if sub is None:
            raise BackendError(ErrorCode.NOT_FOUND, f"no submission {submission_id!r}")
        return sub.status

    def snapshot(self) -> dict:
        """Canonical view of the whole state, for comparisons."""
        return {
            "submissions": {k: v.to_dict() for k, v in sorted(self.submissions.items())},
            "tokens": dict(sorted(self.by_token.items())),
            "actions": {k: asdict(v) for k, v in sorted(self.action_tokens.items())},
        }

    # -- commands

    def validate(self, form_id: int, fields: dict[str, str]) -> FormSchema:
        schema = self.forms.get(form_id)
        if schema is None:
            raise BackendError(ErrorCode.NOT_FOUND, f"unknown form id {form_id}")
        for name in fields:
            if name not in schema.field_names:
                raise BackendError(ErrorCode.VALIDATION, f"field {name!r} not in form {form_id}", name)
        for name in schema.required:
            if not fields.get(name):
                raise BackendError(ErrorCode.VALIDATION, f"missing required field {name!r}", name)
        return schema

    def submit_form(self, form_id: int, fields: dict[str, str], token: str,
                    t_ms: int = 0) -> FormSubmission:
        if token in self.by_token:
            return self.submissions[self.by_token[token]]
        self.validate(form_id, fields)
        rec = {"type": "submit", "id": f"S{len(self.submissions) + 1:06d}", "form_id": form_id,
               "fields": dict(sorted(fields.items())), "token": token, "t_ms": t_ms}
        self._persist(rec)
        return self.submissions[rec["id"]]

    def review(self, submission_id: str, accept: bool, t_ms: int = 0) -> FormSubmission:
        sub = self.submissions.get(submission_id)
        if sub is None:
            raise BackendError(ErrorCode.NOT_FOUND, f"no submission {submission_id!r}")
        status = Status.ACCEPTED if accept else Status.REJECTED
        self._persist({"type": "review", "id": submission_id, "status": status.value, "t_ms": t_ms})
        return sub

    def perform_action(self, action_id: int, params: dict[str, str], token: str,
                       t_ms: int = 0) -> ActionResult:
        if token in self.action_tokens:
            return self.action_tokens[token]
        if not 1 <= action_id <= len(self.actions):
            raise BackendError(ErrorCode.NOT_FOUND, f"unknown action id {action_id}")
        desc = self.actions[action_id - 1]
        for name in desc.required:
            if not params.get(name):
                raise BackendError(ErrorCode.VALIDATION, f"missing parameter {name!r}", name)
        self._persist({"type": "action", "action_id": action_id, "token": token,
                       "reply": f"{desc.name} done", "t_ms": t_ms})
        return self.action_tokens[token]

    def _persist(self, rec: dict) -> None:
        if self.log is not None:
            self.log.append(rec)
        self._apply(rec)

    def _apply(self, rec: dict) -> None:
        kind = rec["type"]
        if kind == "submit":
            self.submissions[rec["id"]] = FormSubmission(rec["id"], rec["form_id"], dict(rec["fields"]),
                                                         rec["token"], Status.PENDING, rec["t_ms"])
            self.by_token[rec["token"]] = rec["id"]
        elif kind == "review":
            self.submissions[rec["id"]].status = Status(rec["status"])
        elif kind == "action":
            self.action_tokens[rec["token"]] = ActionResult(rec["action_id"], rec["token"], rec["reply"])
        else:
            raise ValueError(f"unknown log record type {kind!r}")

    # -- wire protocol

    def handle_request(self, req: dict) -> dict:
        """Dispatch one decoded request; errors become ``{"ok": false, ...}`` replies."""
        try:
            op = req.get("op")
            if op == "submit_form":
                sub = self.submit_form(int(req["form_id"]), dict(req["fields"]), str(req["token"]),
                                       int(req.get("t_ms", 0)))
                return {"ok": True, "submission": sub.to_dict()}
            if op == "get_status":
                return {"ok": True, "status": self.get_status(str(req["id"])).value}
            if op == "review":
                sub = self.review(str(req["id"]), bool(req["accept"]), int(req.get("t_ms", 0)))
                return {"ok": True, "submission": sub.to_dict()}
            if op == "action":
                res = self.perform_action(int(req["action_id"]), dict(req.get("params", {})),
                                          str(req["token"]), int(req.get("t_ms", 0)))
                return {"ok": True, "reply": res.reply, "token": res.token}
            if op == "list_actions":
                return {"ok": True, "actions": [asdict(a) for a in self.list_actions()]}
            raise BackendError(ErrorCode.BAD_REQUEST, f"unknown op {op!r}")
        except BackendError as exc:
            return {"ok": False, "code": exc.code.value, "detail": exc.detail, "field": exc.field}
        except (KeyError, TypeError, ValueError) as exc:
            return {"ok": False, "code": ErrorCode.BAD_REQUEST.value, "detail": str(exc), "field": None}


def encode_frame(obj: dict) -> bytes:
    data = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return _LEN.pack(len(data)) + data


async def read_frame(reader: asyncio.StreamReader) -> dict | None:
    try:
        head = await reader.readexactly(_LEN.size)
        (n,) = _LEN.unpack(head)
        return json.loads(await reader.readexactly(n))
    except asyncio.IncompleteReadError:
        return None


async def serve(service: FormService, host: str, port: int,
                ready: asyncio.Event | None = None) -> None:
    """Serve length-prefixed JSON requests over TCP until cancelled."""
    lock = asyncio.Lock()

    async def client(reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        while (req := await read_frame(reader)) is not None:
            async with lock:  # single writer
                resp = service.handle_request(req)
            writer.write(encode_frame(resp))
            await writer.drain()
        writer.close()

    server = await asyncio.start_server(client, host, port)
    async with server:
        if ready is not None:
            ready.set()
        await server.serve_forever()
